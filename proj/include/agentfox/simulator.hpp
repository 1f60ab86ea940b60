#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agentfox/core.hpp"

namespace agentfox {

// Synthetic expert panel with regime-dependent accuracy and controllable
// miscalibration. Regimes drive both the feature clusters (well-separated
// Gaussians per modality) and each expert's correctness probability.
struct PanelSpec {
    int experts = 4;
    int regimes = 2;
    std::vector<Modality> modalities = {Modality::clip, Modality::srm, Modality::cfa};
    std::map<Modality, int> feature_dims = {{Modality::clip, 8}, {Modality::srm, 4}, {Modality::cfa, 4}};
    std::vector<std::vector<double>> accuracy_matrix;  // [expert][regime]
    std::vector<double> gamma;                         // per-expert distortion exponent, > 0
    std::vector<double> semantic_accuracy;             // per regime; empty = no semantic stream
    double semantic_confidence = 0.7;                  // verdict confidence of the semantic stream
    double fake_fraction = 0.5;
    int samples = 1000;
    std::uint64_t seed = 42;
    std::string dataset_name = "sim";
    int dataset_count = 1;  // samples are spread round-robin over sim-0..sim-(d-1)

    void validate() const;
};

struct PanelData {
    DatasetManifest manifest;
    FeatureTable features;
    // expert id ("expert-0"..) -> sample id -> raw score
    std::map<std::string, std::map<std::string, double>> raw_scores;
    // semantic analyzer score per sample (present iff semantic_accuracy set)
    std::map<std::string, double> semantic_scores;
    std::map<std::string, int> regime_of;  // ground-truth regime per sample
};

PanelData generate_panel(const PanelSpec& spec);

// Monotone miscalibration that fixes 0.5, so thresholded calls are
// unaffected: p -> p^g / (p^g + (1-p)^g).
double distort_score(double p, double gamma);

PanelSpec load_panel_spec(const std::string& path);
void save_panel_spec(const PanelSpec& spec, const std::string& path);

// Writes manifest, feature sidecar, replay score manifest, semantic scores
// and regime labels under dir.
void write_panel_artifacts(const PanelData& data, const std::string& dir);

}  // namespace agentfox
