#include "agentfox/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "agentfox/rng.hpp"
#include "json.hpp"

namespace agentfox {

using nlohmann::json;

void PanelSpec::validate() const {
    if (experts < 1 || regimes < 1 || samples < 1)
        throw std::invalid_argument("panel spec: experts, regimes and samples must be positive");
    if (static_cast<int>(accuracy_matrix.size()) != experts)
        throw std::invalid_argument("panel spec: accuracy_matrix must have one row per expert");
    for (const auto& row : accuracy_matrix) {
        if (static_cast<int>(row.size()) != regimes)
            throw std::invalid_argument("panel spec: accuracy_matrix row length must equal regime count");
        for (double a : row)
            if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("panel spec: accuracy out of [0,1]");
    }
    if (static_cast<int>(gamma.size()) != experts)
        throw std::invalid_argument("panel spec: gamma must have one entry per expert");
    for (double g : gamma)
        if (!(g > 0.0)) throw std::invalid_argument("panel spec: gamma must be positive");
    if (!semantic_accuracy.empty() && static_cast<int>(semantic_accuracy.size()) != regimes)
        throw std::invalid_argument("panel spec: semantic_accuracy length must equal regime count");
    if (!(fake_fraction >= 0.0 && fake_fraction <= 1.0))
        throw std::invalid_argument("panel spec: fake_fraction out of [0,1]");
    if (dataset_count < 1) throw std::invalid_argument("panel spec: dataset_count must be >= 1");
    for (Modality m : modalities)
        if (!feature_dims.count(m) || feature_dims.at(m) < 1)
            throw std::invalid_argument("panel spec: missing feature dimension for " + to_string(m));
}

double distort_score(double p, double gamma) {
    const double a = std::pow(p, gamma);
    const double b = std::pow(1.0 - p, gamma);
    if (a + b == 0.0) return p;
    return a / (a + b);
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse normal CDF by bisection; accuracy values are clamped away from {0,1}.
double probit(double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    double lo = -6.0, hi = 6.0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

PanelData generate_panel(const PanelSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    PanelData data;
    data.manifest.name = spec.dataset_name;
    data.manifest.split = Split::train;

    // Evidence model per (expert, regime): latent z ~ N(+mu, 1) for fake and
    // N(-mu, 1) for real with mu = probit(accuracy), so a 0.5-thresholded score
    // is correct with exactly the configured probability. The emitted score
    // sigmoid(2*lambda*z) is calibrated within the regime when lambda = |mu|;
    // anti-accurate experts (mu < 0) stay confidently wrong.
    std::vector<std::vector<double>> mu(spec.experts, std::vector<double>(spec.regimes));
    std::vector<std::vector<double>> lambda(spec.experts, std::vector<double>(spec.regimes));
    for (int j = 0; j < spec.experts; ++j)
        for (int r = 0; r < spec.regimes; ++r) {
            mu[j][r] = probit(spec.accuracy_matrix[j][r]);
            lambda[j][r] = std::max(std::abs(mu[j][r]), 0.05);
        }

    for (int i = 0; i < spec.samples; ++i) {
        Sample s;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "sim-%06d", i);
        s.id = idbuf;
        s.source_dataset = spec.dataset_count > 1
                               ? spec.dataset_name + "-" + std::to_string(i % spec.dataset_count)
                               : spec.dataset_name;
        s.content_hash = hash_content(s.id);

        const int regime = static_cast<int>(rng.index(spec.regimes));
        const bool fake = rng.bernoulli(spec.fake_fraction);
        s.ground_truth = fake ? Label::fake : Label::real;
        data.regime_of[s.id] = regime;

        for (Modality m : spec.modalities) {
            const int dim = spec.feature_dims.at(m);
            FeatureVector fv;
            fv.modality = m;
            fv.values.resize(dim);
            for (int d = 0; d < dim; ++d) {
                double mean = (d == regime % dim) ? 10.0 * (regime + 1) : 0.0;
                fv.values[d] = mean + rng.normal();
            }
            data.features[{s.id, m}] = std::move(fv);
            s.feature_refs[m] = "inline";
        }

        for (int j = 0; j < spec.experts; ++j) {
            const double z = (fake ? mu[j][regime] : -mu[j][regime]) + rng.normal();
            double raw = sigmoid(2.0 * lambda[j][regime] * z);
            raw = distort_score(raw, spec.gamma[j]);
            data.raw_scores["expert-" + std::to_string(j)][s.id] = raw;
        }

        if (!spec.semantic_accuracy.empty()) {
            const bool correct = rng.bernoulli(spec.semantic_accuracy[regime]);
            const double u = rng.uniform();
            const bool toward_fake = correct == fake;
            double mag = (spec.semantic_confidence - 0.5) * (0.8 + 0.4 * u);
            mag = std::clamp(mag, 0.01, 0.49);
            data.semantic_scores[s.id] = toward_fake ? 0.5 + mag : 0.5 - mag;
        }

        data.manifest.samples.push_back(std::move(s));
    }
    return data;
}

PanelSpec load_panel_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_panel_spec: cannot open " + path);
    json j = json::parse(in);
    PanelSpec spec;
    spec.experts = j.at("experts").get<int>();
    spec.regimes = j.at("regimes").get<int>();
    spec.accuracy_matrix = j.at("accuracy_matrix").get<std::vector<std::vector<double>>>();
    spec.gamma = j.at("gamma").get<std::vector<double>>();
    if (j.contains("semantic_accuracy"))
        spec.semantic_accuracy = j.at("semantic_accuracy").get<std::vector<double>>();
    spec.semantic_confidence = j.value("semantic_confidence", 0.7);
    spec.fake_fraction = j.value("fake_fraction", 0.5);
    spec.samples = j.at("samples").get<int>();
    spec.seed = j.value("seed", 42ULL);
    spec.dataset_name = j.value("dataset_name", "sim");
    spec.dataset_count = j.value("dataset_count", 1);
    if (j.contains("modalities")) {
        spec.modalities.clear();
        for (const auto& m : j.at("modalities")) spec.modalities.push_back(parse_modality(m.get<std::string>()));
    }
    if (j.contains("feature_dims")) {
        spec.feature_dims.clear();
        for (const auto& [k, v] : j.at("feature_dims").items())
            spec.feature_dims[parse_modality(k)] = v.get<int>();
    }
    spec.validate();
    return spec;
}

void save_panel_spec(const PanelSpec& spec, const std::string& path) {
    spec.validate();
    json j;
    j["experts"] = spec.experts;
    j["regimes"] = spec.regimes;
    j["accuracy_matrix"] = spec.accuracy_matrix;
    j["gamma"] = spec.gamma;
    if (!spec.semantic_accuracy.empty()) j["semantic_accuracy"] = spec.semantic_accuracy;
    j["semantic_confidence"] = spec.semantic_confidence;
    j["fake_fraction"] = spec.fake_fraction;
    j["samples"] = spec.samples;
    j["seed"] = spec.seed;
    j["dataset_name"] = spec.dataset_name;
    j["dataset_count"] = spec.dataset_count;
    json mods = json::array();
    for (Modality m : spec.modalities) mods.push_back(to_string(m));
    j["modalities"] = mods;
    json dims = json::object();
    for (const auto& [m, d] : spec.feature_dims) dims[to_string(m)] = d;
    j["feature_dims"] = dims;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_panel_spec: cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_panel_artifacts(const PanelData& data, const std::string& dir) {
    save_manifest(data.manifest, dir + "/manifest.jsonl");
    save_features(data.features, dir + "/features.jsonl");
    {
        std::ofstream out(dir + "/scores.jsonl");
        if (!out) throw std::runtime_error("write_panel_artifacts: cannot write scores");
        for (const auto& [expert, per_sample] : data.raw_scores)
            for (const auto& [sample_id, score] : per_sample) {
                json j = {{"sample_id", sample_id}, {"expert_id", expert}, {"score", score}};
                out << j.dump() << "\n";
            }
        for (const auto& [sample_id, score] : data.semantic_scores) {
            json j = {{"sample_id", sample_id}, {"expert_id", "semantic"}, {"score", score}};
            out << j.dump() << "\n";
        }
    }
    {
        std::ofstream out(dir + "/regimes.jsonl");
        for (const auto& [sample_id, regime] : data.regime_of) {
            json j = {{"sample_id", sample_id}, {"regime", regime}};
            out << j.dump() << "\n";
        }
    }
}

}  // namespace agentfox
