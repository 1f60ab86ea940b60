#pragma once

#include <map>
#include <string>
#include <vector>

#include "agentfox/agent.hpp"
#include "agentfox/report.hpp"

namespace agentfox {

// Four-stage inference over a loaded panel and profile store. Immutable
// after construction; safe to run over distinct samples concurrently.
class Pipeline {
public:
    Pipeline(Panel panel, std::map<std::string, ExpertProfile> expert_profiles,
             std::vector<ClusteringProfile> clustering_profiles, PipelineConfig config);

    ForensicReport run(const Sample& sample, const std::map<Modality, FeatureVector>& features) const;

    const Panel& panel() const { return panel_; }
    const PipelineConfig& config() const { return config_; }
    const std::string& fingerprint() const { return fingerprint_; }

private:
    Panel panel_;
    std::map<std::string, ExpertProfile> expert_profiles_;
    std::vector<ClusteringProfile> clustering_profiles_;
    PipelineConfig config_;
    LlmClient client_;
    std::string fingerprint_;
};

}  // namespace agentfox
