#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "agentfox/clustering.hpp"
#include "agentfox/rng.hpp"

using namespace agentfox;

namespace {

std::vector<FeatureVector> wrap1d(const std::vector<double>& xs, Modality m = Modality::srm) {
    std::vector<FeatureVector> out;
    for (double x : xs) out.push_back({m, {x}});
    return out;
}

// Exhaustive oracle for 1-D k-means: the optimal clustering partitions the
// sorted points into k consecutive runs, so enumerate all cut placements.
double optimal_1d_inertia(std::vector<double> xs, int k) {
    std::sort(xs.begin(), xs.end());
    const int n = static_cast<int>(xs.size());
    std::vector<double> pre(n + 1, 0.0), pre2(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        pre[i + 1] = pre[i] + xs[i];
        pre2[i + 1] = pre2[i] + xs[i] * xs[i];
    }
    auto cost = [&](int a, int b) {  // [a, b)
        const double s = pre[b] - pre[a], s2 = pre2[b] - pre2[a];
        return s2 - s * s / (b - a);
    };
    // dp[j][i]: best cost of splitting first i points into j runs
    std::vector<std::vector<double>> dp(k + 1, std::vector<double>(n + 1, std::numeric_limits<double>::infinity()));
    dp[0][0] = 0.0;
    for (int j = 1; j <= k; ++j)
        for (int i = j; i <= n; ++i)
            for (int a = j - 1; a < i; ++a) dp[j][i] = std::min(dp[j][i], dp[j - 1][a] + cost(a, i));
    return dp[k][n];
}

}  // namespace

TEST_CASE("silhouette hand fixture {0,1} vs {10,11}") {
    std::vector<std::vector<double>> pts = {{0}, {1}, {10}, {11}};
    std::vector<int> assign = {0, 0, 1, 1};
    // Each point: a = 1, b = (9 + 10)/2 or (10 + 11)/2, s = 1 - a/b.
    // mean s = (1 - 2/19 + 1 - 2/21 + 1 - 2/21 + 1 - 2/19)/4 = 0.89975 (approx)
    CHECK(silhouette_score(pts, assign) == doctest::Approx(0.899749).epsilon(1e-4));
    const double expect = ((1.0 - 1.0 / 9.5) + (1.0 - 1.0 / 10.5)) / 2.0;
    CHECK(silhouette_score(pts, assign) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(silhouette_score(pts, assign) - 0.89975) < 1e-6);
}

TEST_CASE("davies_bouldin hand fixture {0,1} vs {10,11}") {
    std::vector<std::vector<double>> pts = {{0}, {1}, {10}, {11}};
    std::vector<int> assign = {0, 0, 1, 1};
    // Per-cluster scatter 0.5, centroid distance 10 -> (0.5 + 0.5)/10 = 0.1.
    CHECK(davies_bouldin(pts, assign) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("silhouette: singleton clusters contribute zero") {
    std::vector<std::vector<double>> pts = {{0}, {10}, {11}};
    std::vector<int> assign = {0, 1, 1};
    // Point 0 is a singleton -> s = 0; points 1,2: a = 1, b = 10 resp. 11.
    const double expect = (0.0 + (1.0 - 1.0 / 10.0) + (1.0 - 1.0 / 11.0)) / 3.0;
    CHECK(silhouette_score(pts, assign) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("davies_bouldin rejects coincident centroids") {
    std::vector<std::vector<double>> pts = {{1}, {3}, {1}, {3}};
    std::vector<int> assign = {0, 0, 1, 1};
    CHECK_THROWS_AS(davies_bouldin(pts, assign), std::invalid_argument);
}

TEST_CASE("select_k elbow fixture [100,40,20,15,12] -> K=2") {
    std::vector<std::pair<int, double>> curve = {{1, 100}, {2, 40}, {3, 20}, {4, 15}, {5, 12}};
    CHECK(select_k(curve) == 2);
}

TEST_CASE("select_k tie goes to the smallest K") {
    // Second difference peaks equal at K=2 and K=4 (both 10).
    std::vector<std::pair<int, double>> tie = {{1, 100}, {2, 80}, {3, 70}, {4, 50}, {5, 40}};
    // d2(K=2) = 20 - 10 = 10; d2(K=3) = 10 - 20 = -10; d2(K=4) = 20 - 10 = 10
    CHECK(select_k(tie) == 2);
}

TEST_CASE("select_k validates its input") {
    CHECK_THROWS_AS(select_k({{1, 10.0}, {2, 8.0}}), std::invalid_argument);             // too short
    CHECK_THROWS_AS(select_k({{1, 10.0}, {3, 8.0}, {4, 6.0}}), std::invalid_argument);   // non-consecutive
    CHECK_THROWS_AS(select_k({{1, 10.0}, {2, 12.0}, {3, 6.0}}), std::invalid_argument);  // increasing inertia
}

TEST_CASE("kmeans matches the exhaustive 1-D oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 15; ++trial) {
        std::vector<double> xs;
        const int groups = 2 + static_cast<int>(rng.index(3));
        for (int g = 0; g < groups; ++g) {
            const double center = g * 10.0;
            for (int i = 0; i < 8; ++i) xs.push_back(center + rng.normal() * 0.4);
        }
        const int k = groups;
        auto model = kmeans_fit(wrap1d(xs), k, 42 + trial);
        // Compare in the standardized space the model actually optimizes.
        std::vector<double> std_xs;
        for (double x : xs) std_xs.push_back(model.standardizer.apply(std::vector<double>{x})[0]);
        const double oracle = optimal_1d_inertia(std_xs, k);
        CHECK(model.inertia == doctest::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("kmeans is deterministic for a fixed seed and sensitive to it") {
    Rng rng(5);
    std::vector<double> xs;
    for (int i = 0; i < 60; ++i) xs.push_back(rng.uniform() * 100.0);
    auto a = kmeans_fit(wrap1d(xs), 4, 42);
    auto b = kmeans_fit(wrap1d(xs), 4, 42);
    REQUIRE(a.centroids.size() == b.centroids.size());
    for (std::size_t c = 0; c < a.centroids.size(); ++c)
        CHECK(a.centroids[c] == b.centroids[c]);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans rejects bad inputs") {
    CHECK_THROWS_AS(kmeans_fit(wrap1d({1.0, 1.0, 1.0}), 2, 42), std::invalid_argument);  // < k distinct
    std::vector<FeatureVector> mixed = {{Modality::srm, {1.0}}, {Modality::clip, {2.0}}};
    CHECK_THROWS_AS(kmeans_fit(mixed, 2, 42), std::invalid_argument);
    std::vector<FeatureVector> ragged = {{Modality::srm, {1.0}}, {Modality::srm, {2.0, 3.0}}};
    CHECK_THROWS_AS(kmeans_fit(ragged, 2, 42), std::invalid_argument);
    std::vector<FeatureVector> nan = {{Modality::srm, {1.0}}, {Modality::srm, {std::nan("")}}};
    CHECK_THROWS_AS(kmeans_fit(nan, 2, 42), std::invalid_argument);
}

TEST_CASE("assign_cluster maps points to their generating centroid") {
    std::vector<double> xs;
    Rng rng(17);
    for (int g = 0; g < 3; ++g)
        for (int i = 0; i < 20; ++i) xs.push_back(g * 20.0 + rng.normal());
    auto model = kmeans_fit(wrap1d(xs), 3, 42);
    // All points generated around one center share an assignment.
    for (int g = 0; g < 3; ++g) {
        const int first = assign_cluster(model, {Modality::srm, {xs[g * 20]}});
        for (int i = 1; i < 20; ++i)
            CHECK(assign_cluster(model, {Modality::srm, {xs[g * 20 + i]}}) == first);
    }
    CHECK(model.inertia >= 0.0);
}

TEST_CASE("standardization is stored and round-trips centroids") {
    std::vector<FeatureVector> pts;
    Rng rng(3);
    for (int i = 0; i < 40; ++i)
        pts.push_back({Modality::cfa, {rng.normal() * 1000.0 + 5000.0, rng.normal() * 0.001}});
    auto model = kmeans_fit(pts, 2, 42);
    REQUIRE(model.standardizer.mean.size() == 2);
    CHECK(model.standardizer.stddev[0] > 100.0);
    for (int c = 0; c < model.k; ++c) {
        auto input_space = model.centroid_in_input_space(c);
        auto back = model.standardizer.apply(input_space);
        for (std::size_t d = 0; d < back.size(); ++d)
            CHECK(back[d] == doctest::Approx(model.centroids[c][d]).epsilon(1e-9));
    }
}

TEST_CASE("cluster_reliability computes per-cluster local F1 and ranking") {
    // Two well-separated clusters. expert-a is perfect in cluster around 0,
    // random-bad in cluster around 100; expert-b the reverse.
    std::vector<FeatureVector> train;
    for (int i = 0; i < 30; ++i) train.push_back({Modality::srm, {static_cast<double>(i % 2)}});
    for (int i = 0; i < 30; ++i) train.push_back({Modality::srm, {100.0 + i % 2}});
    auto model = kmeans_fit(train, 2, 42);

    std::vector<ValObservation> val;
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const bool near = i % 2 == 0;
        const Label gt = rng.bernoulli(0.5) ? Label::fake : Label::real;
        ValObservation o;
        o.features = {Modality::srm, {near ? rng.uniform() : 100.0 + rng.uniform()}};
        o.ground_truth = gt;
        const double right = gt == Label::fake ? 0.9 : 0.1;
        const double wrong = gt == Label::fake ? 0.1 : 0.9;
        o.calibrated_scores["expert-a"] = near ? right : wrong;
        o.calibrated_scores["expert-b"] = near ? wrong : right;
        val.push_back(o);
    }
    auto rel = cluster_reliability(model, val, 0.5);
    REQUIRE(rel.size() == 2);
    const int near_cluster = assign_cluster(model, {Modality::srm, {0.5}});
    for (const auto& r : rel) {
        CHECK(r.usable);
        REQUIRE(r.ranking.size() == 2);
        const std::string expect_top = r.cluster_id == near_cluster ? "expert-a" : "expert-b";
        CHECK(r.ranking.front() == expect_top);
        CHECK(r.per_expert.at(expect_top).f1 == doctest::Approx(1.0));
        CHECK(r.per_expert.at(expect_top).support == 100);
        CHECK(r.text.find("ranking=") != std::string::npos);
    }
}

TEST_CASE("cluster with no validation support is marked unusable") {
    std::vector<FeatureVector> train;
    for (int i = 0; i < 10; ++i) train.push_back({Modality::srm, {static_cast<double>(i % 3)}});
    for (int i = 0; i < 10; ++i) train.push_back({Modality::srm, {50.0 + i % 3}});
    auto model = kmeans_fit(train, 2, 42);
    std::vector<ValObservation> val;
    for (int i = 0; i < 6; ++i) {
        ValObservation o;
        o.features = {Modality::srm, {static_cast<double>(i % 3)}};  // only the near cluster
        o.ground_truth = i % 2 ? Label::fake : Label::real;
        o.calibrated_scores["expert-a"] = i % 2 ? 0.8 : 0.2;
        val.push_back(o);
    }
    auto rel = cluster_reliability(model, val, 0.5);
    REQUIRE(rel.size() == 2);
    const int far_cluster = assign_cluster(model, {Modality::srm, {51.0}});
    for (const auto& r : rel) {
        if (r.cluster_id == far_cluster) {
            CHECK_FALSE(r.usable);
            CHECK(r.text.find("unusable") != std::string::npos);
        } else {
            CHECK(r.usable);
        }
    }
}

TEST_CASE("build_clustering_profile with pinned K and quality text") {
    Rng rng(77);
    std::vector<FeatureVector> train;
    std::vector<ValObservation> val;
    for (int i = 0; i < 120; ++i) {
        const int g = i % 3;
        FeatureVector f{Modality::cfa, {g * 25.0 + rng.normal(), g * 25.0 + rng.normal()}};
        train.push_back(f);
        ValObservation o;
        o.features = f;
        o.ground_truth = rng.bernoulli(0.5) ? Label::fake : Label::real;
        o.calibrated_scores["e0"] = o.ground_truth == Label::fake ? 0.8 : 0.2;
        val.push_back(o);
    }
    auto p = build_clustering_profile(Modality::cfa, train, val, 3, 42);
    CHECK(p.model.k == 3);
    CHECK(p.reliabilities.size() == 3);
    CHECK(p.quality.silhouette > 0.5);
    CHECK(p.quality.text.find("silhouette=") != std::string::npos);
    CHECK(p.quality.text.find("davies_bouldin=") != std::string::npos);
    CHECK(p.quality.text.find("separability=ok") != std::string::npos);

    // Auto-K on the same well-separated data lands on 3 too.
    auto q = build_clustering_profile(Modality::cfa, train, val, std::nullopt, 42);
    CHECK(q.model.k == 3);
}

TEST_CASE("low separability is flagged in quality text") {
    Rng rng(13);
    std::vector<FeatureVector> train;
    std::vector<ValObservation> val;
    for (int i = 0; i < 100; ++i) {
        FeatureVector f{Modality::srm, {rng.normal(), rng.normal()}};  // one blob, no structure
        train.push_back(f);
        ValObservation o;
        o.features = f;
        o.ground_truth = rng.bernoulli(0.5) ? Label::fake : Label::real;
        o.calibrated_scores["e0"] = 0.5;
        val.push_back(o);
    }
    auto p = build_clustering_profile(Modality::srm, train, val, 5, 42);
    CHECK(p.quality.silhouette < 0.5);
    if (p.quality.silhouette < kDefaultLowSeparability)
        CHECK(p.quality.text.find("low separability") != std::string::npos);
}

TEST_CASE("clustering profile store round-trip") {
    Rng rng(21);
    std::vector<FeatureVector> train;
    std::vector<ValObservation> val;
    for (int i = 0; i < 60; ++i) {
        FeatureVector f{Modality::clip, {(i % 2) * 30.0 + rng.normal()}};
        train.push_back(f);
        ValObservation o;
        o.features = f;
        o.ground_truth = i % 2 ? Label::fake : Label::real;
        o.calibrated_scores["e0"] = i % 2 ? 0.9 : 0.1;
        o.calibrated_scores["e1"] = 0.5;
        val.push_back(o);
    }
    auto p = build_clustering_profile(Modality::clip, train, val, 2, 42);
    const auto dir = std::filesystem::temp_directory_path() / "agentfox_cluster_store";
    std::filesystem::create_directories(dir);
    save_clustering_profile(p, dir.string());
    auto loaded = load_clustering_profile(clustering_profile_path(dir.string(), Modality::clip));
    CHECK(loaded.modality == p.modality);
    CHECK(loaded.model.k == p.model.k);
    REQUIRE(loaded.model.centroids.size() == p.model.centroids.size());
    for (std::size_t c = 0; c < p.model.centroids.size(); ++c)
        for (std::size_t d = 0; d < p.model.centroids[c].size(); ++d)
            CHECK(loaded.model.centroids[c][d] == doctest::Approx(p.model.centroids[c][d]).epsilon(1e-12));
    CHECK(loaded.quality.text == p.quality.text);
    REQUIRE(loaded.reliabilities.size() == p.reliabilities.size());
    CHECK(loaded.reliabilities[0].ranking == p.reliabilities[0].ranking);
    CHECK(loaded.reliabilities[0].text == p.reliabilities[0].text);
    // Assignments agree between the original and reloaded model.
    for (const auto& o : val)
        CHECK(assign_cluster(loaded.model, o.features) == assign_cluster(p.model, o.features));
    std::filesystem::remove_all(dir);
}
