#include "agentfox/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "agentfox/rng.hpp"
#include "json.hpp"

namespace agentfox {

using nlohmann::json;

std::vector<double> Standardizer::apply(std::span<const double> v) const {
    if (v.size() != mean.size()) throw std::invalid_argument("standardizer: dimension mismatch");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / stddev[i];
    return out;
}

std::vector<double> ClusterModel::centroid_in_input_space(int c) const {
    const auto& z = centroids.at(c);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = z[i] * standardizer.stddev[i] + standardizer.mean[i];
    return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

int nearest_centroid(const std::vector<std::vector<double>>& centroids, std::span<const double> x) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = sq_dist(centroids[c], x);
        if (d < best_d) {  // strict: ties keep the lowest id
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

Standardizer fit_standardizer(const std::vector<FeatureVector>& features) {
    const std::size_t dim = features.front().values.size();
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.stddev.assign(dim, 0.0);
    for (const auto& f : features)
        for (std::size_t i = 0; i < dim; ++i) s.mean[i] += f.values[i];
    for (std::size_t i = 0; i < dim; ++i) s.mean[i] /= static_cast<double>(features.size());
    for (const auto& f : features)
        for (std::size_t i = 0; i < dim; ++i) {
            double d = f.values[i] - s.mean[i];
            s.stddev[i] += d * d;
        }
    for (std::size_t i = 0; i < dim; ++i) {
        s.stddev[i] = std::sqrt(s.stddev[i] / static_cast<double>(features.size()));
        if (s.stddev[i] == 0.0) s.stddev[i] = 1.0;
    }
    return s;
}

}  // namespace

ClusterModel kmeans_fit(const std::vector<FeatureVector>& features, int k, std::uint64_t seed) {
    if (features.empty() || k < 1) throw std::invalid_argument("kmeans_fit: need points and k >= 1");
    const Modality modality = features.front().modality;
    const std::size_t dim = features.front().values.size();
    for (const auto& f : features) {
        if (f.modality != modality) throw std::invalid_argument("kmeans_fit: mixed modalities");
        if (f.values.size() != dim) throw std::invalid_argument("kmeans_fit: mixed dimensions");
        for (double v : f.values)
            if (!std::isfinite(v)) throw std::invalid_argument("kmeans_fit: non-finite feature value");
    }
    {
        std::set<std::vector<double>> distinct;
        for (const auto& f : features) {
            distinct.insert(f.values);
            if (distinct.size() >= static_cast<std::size_t>(k)) break;
        }
        if (distinct.size() < static_cast<std::size_t>(k))
            throw std::invalid_argument("kmeans_fit: fewer distinct points than k");
    }

    ClusterModel model;
    model.modality = modality;
    model.k = k;
    model.seed = seed;
    model.standardizer = fit_standardizer(features);

    std::vector<std::vector<double>> pts;
    pts.reserve(features.size());
    for (const auto& f : features) pts.push_back(model.standardizer.apply(f.values));
    const std::size_t n = pts.size();

    // k-means++ seeding
    Rng rng(seed);
    std::vector<std::vector<double>>& centroids = model.centroids;
    centroids.push_back(pts[rng.index(n)]);
    std::vector<double> d2(n);
    while (centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(c, pts[i]));
            d2[i] = best;
            total += best;
        }
        double r = rng.uniform() * total;
        std::size_t pick = 0;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= r && d2[i] > 0.0) {
                pick = i;
                break;
            }
            if (i + 1 == n) pick = i;
        }
        centroids.push_back(pts[pick]);
    }

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 300; ++iter) {
        for (std::size_t i = 0; i < n; ++i) assign[i] = nearest_centroid(centroids, pts[i]);

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += pts[i][d];
        }
        // Empty clusters take over the point farthest from its own centroid.
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = sq_dist(centroids[assign[i]], pts[i]);
                if (d > far_d && counts[assign[i]] > 1) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[assign[far]];
            for (std::size_t d = 0; d < dim; ++d) sums[assign[far]][d] -= pts[far][d];
            assign[far] = c;
            counts[c] = 1;
            sums[c] = pts[far];
        }

        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            std::vector<double> nc(dim);
            for (std::size_t d = 0; d < dim; ++d) nc[d] = sums[c][d] / static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(sq_dist(nc, centroids[c])));
            centroids[c] = std::move(nc);
        }
        if (shift < 1e-8) break;
    }

    model.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        model.inertia += sq_dist(centroids[nearest_centroid(centroids, pts[i])], pts[i]);
    return model;
}

int assign_cluster(const ClusterModel& model, const FeatureVector& x) {
    if (static_cast<std::size_t>(x.dim()) != model.standardizer.mean.size())
        throw std::invalid_argument("assign_cluster: dimension mismatch");
    return nearest_centroid(model.centroids, model.standardizer.apply(x.values));
}

int select_k(const std::vector<std::pair<int, double>>& curve) {
    if (curve.size() < 3) throw std::invalid_argument("select_k: need at least 3 points");
    for (std::size_t i = 1; i < curve.size(); ++i) {
        if (curve[i].first != curve[i - 1].first + 1)
            throw std::invalid_argument("select_k: K values must be consecutive");
        if (curve[i].second > curve[i - 1].second)
            throw std::invalid_argument("select_k: inertia must be non-increasing");
    }
    int best_k = curve[1].first;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
        double second_diff = curve[i - 1].second - 2.0 * curve[i].second + curve[i + 1].second;
        if (second_diff > best) {
            best = second_diff;
            best_k = curve[i].first;
        }
    }
    return best_k;
}

std::string render_reliability_text(const ClusterReliability& r) {
    if (!r.usable || r.ranking.empty()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "cluster %d: no validation support; unusable", r.cluster_id);
        return buf;
    }
    std::string ranked;
    for (const auto& id : r.ranking) {
        if (!ranked.empty()) ranked += " > ";
        ranked += id;
    }
    const auto& top = r.per_expert.at(r.ranking.front());
    char buf[128];
    std::snprintf(buf, sizeof(buf), "cluster %d: ranking=%s; top_f1=%.4f; support=%zu", r.cluster_id,
                  ranked.c_str(), top.f1, top.support);
    return buf;
}

std::vector<ClusterReliability> cluster_reliability(const ClusterModel& model,
                                                    const std::vector<ValObservation>& val,
                                                    double threshold) {
    std::set<std::string> expert_ids;
    for (const auto& obs : val)
        for (const auto& [id, s] : obs.calibrated_scores) expert_ids.insert(id);
    for (const auto& obs : val)
        if (obs.calibrated_scores.size() != expert_ids.size())
            throw std::invalid_argument("cluster_reliability: not all experts scored on all samples");

    std::vector<std::vector<const ValObservation*>> groups(model.k);
    for (const auto& obs : val) groups[assign_cluster(model, obs.features)].push_back(&obs);

    std::vector<ClusterReliability> out;
    for (int c = 0; c < model.k; ++c) {
        ClusterReliability r;
        r.cluster_id = c;
        if (groups[c].empty()) {
            r.usable = false;
            r.text = render_reliability_text(r);
            out.push_back(std::move(r));
            continue;
        }
        for (const auto& id : expert_ids) {
            std::vector<std::pair<Label, Label>> pairs;
            for (const auto* obs : groups[c])
                pairs.emplace_back(threshold_label(obs->calibrated_scores.at(id), threshold), obs->ground_truth);
            auto m = f1_acc(pairs);
            r.per_expert[id] = {m.f1, m.acc, groups[c].size()};
        }
        r.ranking.assign(expert_ids.begin(), expert_ids.end());
        std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](const std::string& a, const std::string& b) {
            const auto& sa = r.per_expert.at(a);
            const auto& sb = r.per_expert.at(b);
            if (sa.f1 != sb.f1) return sa.f1 > sb.f1;
            if (sa.acc != sb.acc) return sa.acc > sb.acc;
            return a < b;
        });
        r.text = render_reliability_text(r);
        out.push_back(std::move(r));
    }
    return out;
}

double silhouette_score(const std::vector<std::vector<double>>& features, const std::vector<int>& assignments) {
    if (features.size() != assignments.size()) throw std::invalid_argument("silhouette: length mismatch");
    std::set<int> clusters(assignments.begin(), assignments.end());
    if (clusters.size() < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");

    const std::size_t n = features.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, std::pair<double, std::size_t>> per_cluster;  // cluster -> (dist sum, count)
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            auto& slot = per_cluster[assignments[j]];
            slot.first += std::sqrt(sq_dist(features[i], features[j]));
            ++slot.second;
        }
        auto own_it = per_cluster.find(assignments[i]);
        if (own_it == per_cluster.end() || own_it->second.second == 0) continue;  // singleton -> 0
        double a = own_it->second.first / static_cast<double>(own_it->second.second);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [c, slot] : per_cluster) {
            if (c == assignments[i]) continue;
            b = std::min(b, slot.first / static_cast<double>(slot.second));
        }
        double m = std::max(a, b);
        total += m == 0.0 ? 0.0 : (b - a) / m;
    }
    return total / static_cast<double>(n);
}

double davies_bouldin(const std::vector<std::vector<double>>& features, const std::vector<int>& assignments) {
    if (features.size() != assignments.size()) throw std::invalid_argument("davies_bouldin: length mismatch");
    std::set<int> ids(assignments.begin(), assignments.end());
    if (ids.size() < 2) throw std::invalid_argument("davies_bouldin: need at least 2 clusters");
    const std::size_t dim = features.front().size();

    std::vector<std::vector<double>> centroids;
    std::vector<double> scatter;
    for (int c : ids) {
        std::vector<double> mean(dim, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < features.size(); ++i)
            if (assignments[i] == c) {
                ++count;
                for (std::size_t d = 0; d < dim; ++d) mean[d] += features[i][d];
            }
        for (std::size_t d = 0; d < dim; ++d) mean[d] /= static_cast<double>(count);
        double s = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i)
            if (assignments[i] == c) s += std::sqrt(sq_dist(mean, features[i]));
        centroids.push_back(std::move(mean));
        scatter.push_back(s / static_cast<double>(count));
    }

    double total = 0.0;
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < centroids.size(); ++j) {
            if (i == j) continue;
            double m = std::sqrt(sq_dist(centroids[i], centroids[j]));
            if (m == 0.0) throw std::invalid_argument("davies_bouldin: coincident centroids");
            worst = std::max(worst, (scatter[i] + scatter[j]) / m);
        }
        total += worst;
    }
    return total / static_cast<double>(centroids.size());
}

ClusteringProfile build_clustering_profile(Modality modality, const std::vector<FeatureVector>& train_features,
                                           const std::vector<ValObservation>& val, std::optional<int> k,
                                           std::uint64_t seed, double threshold, double low_separability) {
    ClusteringProfile p;
    p.modality = modality;

    if (k.has_value()) {
        p.model = kmeans_fit(train_features, *k, seed);
    } else {
        std::vector<std::pair<int, double>> curve;
        std::map<int, ClusterModel> fits;
        double prev = std::numeric_limits<double>::infinity();
        for (int kk = 2; kk <= 20; ++kk) {
            ClusterModel m;
            try {
                m = kmeans_fit(train_features, kk, seed);
            } catch (const std::invalid_argument&) {
                break;  // fewer distinct points than kk
            }
            // Enforce a non-increasing curve for select_k; a rare bad local
            // optimum is clamped to the previous inertia.
            m.inertia = std::min(m.inertia, prev);
            prev = m.inertia;
            curve.emplace_back(kk, m.inertia);
            fits.emplace(kk, std::move(m));
        }
        if (curve.size() < 3) throw std::invalid_argument("build_clustering_profile: too few feasible K values");
        p.model = fits.at(select_k(curve));
    }

    p.reliabilities = cluster_reliability(p.model, val, threshold);

    std::vector<std::vector<double>> pts;
    std::vector<int> assignments;
    for (const auto& f : train_features) {
        pts.push_back(p.model.standardizer.apply(f.values));
        assignments.push_back(nearest_centroid(p.model.centroids, pts.back()));
    }
    p.quality.silhouette = silhouette_score(pts, assignments);
    p.quality.davies_bouldin = davies_bouldin(pts, assignments);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "silhouette=%.4f; davies_bouldin=%.4f; separability=%s",
                  p.quality.silhouette, p.quality.davies_bouldin,
                  p.quality.silhouette < low_separability ? "low separability" : "ok");
    p.quality.text = buf;
    return p;
}

std::string clustering_profile_path(const std::string& dir, Modality m) {
    return dir + "/clustering_profile_" + to_string(m) + ".json";
}

void save_clustering_profile(const ClusteringProfile& p, const std::string& dir) {
    json j;
    j["modality"] = to_string(p.modality);
    j["model"] = {{"k", p.model.k},
                  {"seed", p.model.seed},
                  {"inertia", p.model.inertia},
                  {"centroids", p.model.centroids},
                  {"mean", p.model.standardizer.mean},
                  {"stddev", p.model.standardizer.stddev}};
    json rels = json::array();
    for (const auto& r : p.reliabilities) {
        json pe = json::object();
        for (const auto& [id, s] : r.per_expert)
            pe[id] = {{"f1", s.f1}, {"acc", s.acc}, {"support", s.support}};
        rels.push_back({{"cluster_id", r.cluster_id},
                        {"per_expert", pe},
                        {"ranking", r.ranking},
                        {"usable", r.usable},
                        {"text", r.text}});
    }
    j["reliabilities"] = rels;
    j["quality"] = {{"silhouette", p.quality.silhouette},
                    {"davies_bouldin", p.quality.davies_bouldin},
                    {"text", p.quality.text}};
    std::ofstream out(clustering_profile_path(dir, p.modality));
    if (!out) throw std::runtime_error("save_clustering_profile: cannot write to " + dir);
    out << j.dump(2) << "\n";
}

ClusteringProfile load_clustering_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_clustering_profile: cannot open " + path);
    json j = json::parse(in);
    ClusteringProfile p;
    p.modality = parse_modality(j.at("modality").get<std::string>());
    const auto& m = j.at("model");
    p.model.modality = p.modality;
    p.model.k = m.at("k").get<int>();
    p.model.seed = m.at("seed").get<std::uint64_t>();
    p.model.inertia = m.at("inertia").get<double>();
    p.model.centroids = m.at("centroids").get<std::vector<std::vector<double>>>();
    p.model.standardizer.mean = m.at("mean").get<std::vector<double>>();
    p.model.standardizer.stddev = m.at("stddev").get<std::vector<double>>();
    for (const auto& rj : j.at("reliabilities")) {
        ClusterReliability r;
        r.cluster_id = rj.at("cluster_id").get<int>();
        r.usable = rj.at("usable").get<bool>();
        r.text = rj.at("text").get<std::string>();
        r.ranking = rj.at("ranking").get<std::vector<std::string>>();
        for (const auto& [id, s] : rj.at("per_expert").items())
            r.per_expert[id] = {s.at("f1").get<double>(), s.at("acc").get<double>(),
                                s.at("support").get<std::size_t>()};
        p.reliabilities.push_back(std::move(r));
    }
    p.quality.silhouette = j.at("quality").at("silhouette").get<double>();
    p.quality.davies_bouldin = j.at("quality").at("davies_bouldin").get<double>();
    p.quality.text = j.at("quality").at("text").get<std::string>();
    return p;
}

}  // namespace agentfox
