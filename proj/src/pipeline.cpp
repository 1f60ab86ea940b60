#include "agentfox/pipeline.hpp"

namespace agentfox {

Pipeline::Pipeline(Panel panel, std::map<std::string, ExpertProfile> expert_profiles,
                   std::vector<ClusteringProfile> clustering_profiles, PipelineConfig config)
    : panel_(std::move(panel)),
      expert_profiles_(std::move(expert_profiles)),
      clustering_profiles_(std::move(clustering_profiles)),
      config_(std::move(config)),
      client_(config_.client) {
    config_.guidelines.validate();
    fingerprint_ = config_fingerprint(panel_, expert_profiles_, clustering_profiles_, config_.guidelines,
                                      config_.seed);
}

ForensicReport Pipeline::run(const Sample& sample, const std::map<Modality, FeatureVector>& features) const {
    EvidenceSet evidence;

    // Stage 1. A failed semantic stage degrades to signal-only with a flag
    // rather than aborting the sample.
    try {
        if (client_.mode() == ClientMode::rule ||
            (client_.mode() == ClientMode::scripted &&
             client_.complete("semantic", sample.id, "", "").empty())) {
            if (panel_.semantic_analyzer()) {
                const double s = score_sample(*panel_.semantic_analyzer(), sample);
                evidence.semantic = semantic_from_score(s, config_.threshold);
            }
        } else {
            evidence.semantic = stage1_semantic(sample, config_.guidelines.semantic, client_);
        }
    } catch (const std::exception&) {
        evidence.semantic.reset();
    }

    // Stage 2 is mandatory; its failure aborts the sample.
    evidence.signal =
        stage2_signal(sample, panel_, expert_profiles_, config_.guidelines.expert, client_, config_);

    // Stage 3 + arbitration only on explicit semantic/signal conflict.
    if (evidence.semantic && detect_conflict(*evidence.semantic, evidence.signal)) {
        if (config_.use_clustering_profiles)
            evidence.cluster = stage3_cluster(features, clustering_profiles_, config_.guidelines.cluster,
                                              client_, config_, &evidence.cluster_skip_note);
        evidence.arbitration = arbitrate(sample.id, evidence, expert_profiles_, config_.guidelines.report,
                                         client_, config_);
    }

    return compile_report(sample.id, evidence, config_.guidelines.report, &client_, fingerprint_);
}

}  // namespace agentfox
