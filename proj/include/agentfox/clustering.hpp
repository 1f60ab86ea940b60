#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agentfox/core.hpp"

namespace agentfox {

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;  // zero variance dims stored as 1

    std::vector<double> apply(std::span<const double> v) const;
};

struct ClusterModel {
    Modality modality{Modality::clip};
    int k = 0;
    std::vector<std::vector<double>> centroids;  // standardized space
    Standardizer standardizer;
    std::uint64_t seed = 0;
    double inertia = 0.0;  // sum of squared distances at convergence

    // Centroid mapped back to input space (for inspection).
    std::vector<double> centroid_in_input_space(int c) const;
};

struct ExpertLocalStats {
    double f1 = 0.0;
    double acc = 0.0;
    std::size_t support = 0;
};

struct ClusterReliability {
    int cluster_id = 0;
    std::map<std::string, ExpertLocalStats> per_expert;
    std::vector<std::string> ranking;  // f1 desc, acc desc, id asc
    bool usable = true;                // false when the cluster has no validation support
    std::string text;
};

struct ClusterQuality {
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    std::string text;
};

struct ClusteringProfile {
    Modality modality{Modality::clip};
    ClusterModel model;
    std::vector<ClusterReliability> reliabilities;
    ClusterQuality quality;
};

// One validation sample as seen by the profiling step.
struct ValObservation {
    FeatureVector features;
    Label ground_truth{Label::real};
    std::map<std::string, double> calibrated_scores;
};

inline constexpr double kDefaultLowSeparability = 0.1;

ClusterModel kmeans_fit(const std::vector<FeatureVector>& features, int k, std::uint64_t seed);
int assign_cluster(const ClusterModel& model, const FeatureVector& x);

// Elbow pick: K maximizing the discrete second difference of the inertia
// curve; ties go to the smallest K.
int select_k(const std::vector<std::pair<int, double>>& inertia_curve);

std::string render_reliability_text(const ClusterReliability& r);

std::vector<ClusterReliability> cluster_reliability(const ClusterModel& model,
                                                    const std::vector<ValObservation>& val,
                                                    double threshold);

double silhouette_score(const std::vector<std::vector<double>>& features, const std::vector<int>& assignments);
double davies_bouldin(const std::vector<std::vector<double>>& features, const std::vector<int>& assignments);

ClusteringProfile build_clustering_profile(Modality modality, const std::vector<FeatureVector>& train_features,
                                           const std::vector<ValObservation>& val, std::optional<int> k,
                                           std::uint64_t seed, double threshold = 0.5,
                                           double low_separability = kDefaultLowSeparability);

void save_clustering_profile(const ClusteringProfile& p, const std::string& dir);
ClusteringProfile load_clustering_profile(const std::string& path);
std::string clustering_profile_path(const std::string& dir, Modality m);

}  // namespace agentfox
