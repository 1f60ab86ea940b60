#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agentfox/calibration.hpp"
#include "agentfox/clustering.hpp"
#include "agentfox/core.hpp"
#include "agentfox/experts.hpp"

namespace agentfox {

struct Guideline {
    std::string id;  // semantic | expert | cluster | report
    std::string text;
    std::string version;
};

struct GuidelineSet {
    Guideline semantic, expert, cluster, report;

    // Loads <dir>/{semantic,expert,cluster,report}.txt; first line
    // "version: x" is the version tag.
    static GuidelineSet load(const std::string& dir);
    void validate() const;
};

enum class ClientMode : int { live = 0, scripted = 1, rule = 2 };

ClientMode parse_client_mode(std::string_view s);
std::string to_string(ClientMode m);

struct ClientConfig {
    ClientMode mode = ClientMode::rule;
    std::string endpoint;
    std::string model;
    double temperature = 0.0;
    std::uint64_t seed = 42;
    std::string transcript_path;  // scripted mode: line-delimited {stage, sample_id, reply}
};

// Chat-style completion client. Scripted mode replays canned replies keyed
// by (stage, sample id); vision and text calls share the contract.
class LlmClient {
public:
    explicit LlmClient(ClientConfig config);
    std::string complete(const std::string& stage, const std::string& sample_id,
                         const std::string& system_prompt, const std::string& user_prompt) const;
    ClientMode mode() const { return config_.mode; }

private:
    ClientConfig config_;
    std::map<std::pair<std::string, std::string>, std::string> transcript_;
};

struct StageError : std::runtime_error {
    StageError(std::string stage_in, const std::string& msg)
        : std::runtime_error("stage " + stage_in + ": " + msg), stage(std::move(stage_in)) {}
    std::string stage;
};

struct Anomaly {
    std::string category;  // logical | physical | anatomical | other
    std::string description;
    double severity = 0.0;
};

struct SemanticReport {
    Verdict verdict;
    std::vector<Anomaly> anomalies;
    std::string raw_model_text;
};

struct SignalEntry {
    std::string expert_id;
    double raw_score = 0.0;
    double calibrated_score = 0.0;
    std::string desc_excerpt;
    std::string quality_excerpt;
    bool failed = false;
    std::string error;
};

struct SignalReport {
    std::vector<SignalEntry> entries;  // full signal panel, panel order
    double aggregate_score = 0.0;
    Verdict verdict;
    bool disagreement_flag = false;
    std::string narrative;
};

struct ClusterEntry {
    Modality modality{Modality::clip};
    int cluster_id = 0;
    std::string ranking_text;
    std::map<std::string, ExpertLocalStats> local_stats;
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    bool usable = true;
};

struct ClusterReport {
    std::vector<ClusterEntry> entries;  // modality order clip < srm < cfa
    std::string narrative;
};

struct ArbitrationRecord {
    Verdict verdict;
    std::vector<std::string> rationale;  // evidence keys
    std::map<std::string, double> weights_used;
    std::vector<Modality> downweighted_modalities;
    double blend_score = 0.0;
};

struct EvidenceSet {
    std::optional<SemanticReport> semantic;  // absent when the semantic stage failed
    SignalReport signal;
    std::optional<ClusterReport> cluster;
    std::optional<ArbitrationRecord> arbitration;
    std::string cluster_skip_note;

    // Keys addressable from arbitration rationales.
    std::vector<std::string> evidence_keys() const;
};

struct PipelineConfig {
    GuidelineSet guidelines;
    ClientConfig client;
    double threshold = 0.5;
    double low_separability = kDefaultLowSeparability;
    double semantic_mix = 0.5;  // lambda in the rule-mode blend
    std::uint64_t seed = 42;
    bool use_expert_profiles = true;      // ablation: calibration + ECE weights
    bool use_clustering_profiles = true;  // ablation: cluster-local arbitration weights
};

SemanticReport stage1_semantic(const Sample& sample, const Guideline& guideline, const LlmClient& client);

// Rule-mode semantic stand-in: verdict from a raw semantic score.
SemanticReport semantic_from_score(double score, double threshold);

SignalReport stage2_signal(const Sample& sample, const Panel& panel,
                           const std::map<std::string, ExpertProfile>& profiles, const Guideline& guideline,
                           const LlmClient& client, const PipelineConfig& config);

bool detect_conflict(const SemanticReport& semantic, const SignalReport& signal);

std::optional<ClusterReport> stage3_cluster(const std::map<Modality, FeatureVector>& features,
                                            const std::vector<ClusteringProfile>& profiles,
                                            const Guideline& guideline, const LlmClient& client,
                                            const PipelineConfig& config, std::string* skip_note);

ArbitrationRecord arbitrate(const std::string& sample_id, const EvidenceSet& evidence,
                            const std::map<std::string, ExpertProfile>& profiles, const Guideline& guideline,
                            const LlmClient& client, const PipelineConfig& config);

Verdict majority_vote(const std::vector<Verdict>& verdicts);
double probability_average(const std::vector<double>& scores, const std::vector<double>& weights);

// Semantic verdict mapped to a fake-class probability for blending.
double semantic_fake_probability(const SemanticReport& semantic);

}  // namespace agentfox
