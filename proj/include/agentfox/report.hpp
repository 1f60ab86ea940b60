#pragma once

#include <string>
#include <vector>

#include "agentfox/agent.hpp"

namespace agentfox {

struct TraceEntry {
    std::string stage;
    std::string evidence_key;
    std::string summary;
    int step = 0;  // logical timestamp; stage order, deterministic
};

struct ForensicReport {
    std::string sample_id;
    Verdict verdict;
    std::vector<TraceEntry> provenance;
    EvidenceSet evidence;
    std::string config_fingerprint;
    std::string narrative;
};

enum class ReportFormat : int { json = 0, markdown = 1 };

// Verdict comes from arbitration when present, otherwise the shared
// semantic/signal verdict. A live renderer contributes narrative only; it
// never re-decides the verdict.
ForensicReport compile_report(const std::string& sample_id, const EvidenceSet& evidence,
                              const Guideline& guideline_report, const LlmClient* renderer,
                              const std::string& config_fingerprint);

std::string emit(const ForensicReport& report, ReportFormat format);
ForensicReport parse_report_json(const std::string& text);

// Digest of panel + profiles + guidelines + seed.
std::string config_fingerprint(const Panel& panel, const std::map<std::string, ExpertProfile>& profiles,
                               const std::vector<ClusteringProfile>& clustering,
                               const GuidelineSet& guidelines, std::uint64_t seed);

}  // namespace agentfox
