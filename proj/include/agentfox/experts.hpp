#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "agentfox/core.hpp"

namespace agentfox {

struct HttpAdapter {
    std::string endpoint;  // e.g. http://localhost:8080/score
};

struct SubprocessAdapter {
    std::string command;  // run via /bin/sh -c; speaks one JSON line per request
};

struct ReplayAdapter {
    std::string manifest_path;
    // Loaded lazily; shared so registrations stay cheap to copy.
    std::shared_ptr<std::map<std::string, double>> scores;  // sample id -> score
};

using Adapter = std::variant<HttpAdapter, SubprocessAdapter, ReplayAdapter>;

struct ExpertRegistration {
    std::string expert_id;
    Adapter adapter;
    std::string desc_text;
    double timeout_s = 30.0;
    int ordinal = 0;  // canonical panel position, never reassigned
};

enum class ScoreErrorKind : int { timeout, unreachable, malformed, out_of_range, unknown_sample };

struct ScoreError : std::runtime_error {
    ScoreError(ScoreErrorKind k, std::string expert, const std::string& msg)
        : std::runtime_error("expert '" + expert + "': " + msg), kind(k), expert_id(std::move(expert)) {}
    ScoreErrorKind kind;
    std::string expert_id;
};

// Signal experts in registration order plus an optional semantic analyzer.
// The semantic analyzer never participates in conflict vectors.
class Panel {
public:
    const std::vector<ExpertRegistration>& signal_experts() const { return signal_; }
    const std::optional<ExpertRegistration>& semantic_analyzer() const { return semantic_; }

    void register_expert(ExpertRegistration reg, bool is_semantic = false);
    void remove_expert(const std::string& expert_id);
    const ExpertRegistration* find(const std::string& expert_id) const;

    void save(const std::string& path) const;
    static Panel load(const std::string& path);

private:
    std::vector<ExpertRegistration> signal_;
    std::optional<ExpertRegistration> semantic_;
    int next_ordinal_ = 0;
};

// Queries the adapter. Out-of-range replies are protocol errors, not clipped.
double score_sample(const ExpertRegistration& reg, const Sample& sample);

// Load a line-delimited {sample_id, expert_id, score} replay manifest,
// filtered to one expert.
std::shared_ptr<std::map<std::string, double>> load_replay_scores(const std::string& path,
                                                                  const std::string& expert_id);

// Deletes an expert's profile file and rewrites the clustering profiles
// without it (rankings re-rendered). Other artifacts are untouched.
void remove_expert_artifacts(const std::string& store_dir, const std::string& expert_id);

}  // namespace agentfox
