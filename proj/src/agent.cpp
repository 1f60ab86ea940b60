#include "agentfox/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace agentfox {

using nlohmann::json;

ClientMode parse_client_mode(std::string_view s) {
    if (s == "live") return ClientMode::live;
    if (s == "scripted") return ClientMode::scripted;
    if (s == "rule") return ClientMode::rule;
    throw std::invalid_argument("unknown client mode: " + std::string(s));
}

std::string to_string(ClientMode m) {
    switch (m) {
        case ClientMode::live: return "live";
        case ClientMode::scripted: return "scripted";
        case ClientMode::rule: return "rule";
    }
    throw std::invalid_argument("bad mode");
}

static Guideline load_guideline(const std::string& dir, const std::string& id) {
    const std::string path = dir + "/" + id + ".txt";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("guideline load: cannot open " + path);
    Guideline g;
    g.id = id;
    g.version = "1";
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line.rfind("version:", 0) == 0) {
            g.version = line.substr(8);
            while (!g.version.empty() && g.version.front() == ' ') g.version.erase(0, 1);
            first = false;
            continue;
        }
        first = false;
        g.text += line;
        g.text += "\n";
    }
    return g;
}

GuidelineSet GuidelineSet::load(const std::string& dir) {
    GuidelineSet set;
    set.semantic = load_guideline(dir, "semantic");
    set.expert = load_guideline(dir, "expert");
    set.cluster = load_guideline(dir, "cluster");
    set.report = load_guideline(dir, "report");
    set.validate();
    return set;
}

void GuidelineSet::validate() const {
    for (const Guideline* g : {&semantic, &expert, &cluster, &report})
        if (g->text.empty()) throw std::invalid_argument("guideline '" + g->id + "' has empty text");
}

LlmClient::LlmClient(ClientConfig config) : config_(std::move(config)) {
    if (config_.mode == ClientMode::scripted && !config_.transcript_path.empty()) {
        std::ifstream in(config_.transcript_path);
        if (!in) throw std::runtime_error("scripted client: cannot open " + config_.transcript_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            transcript_[{j.at("stage").get<std::string>(), j.at("sample_id").get<std::string>()}] =
                j.at("reply").get<std::string>();
        }
    }
}

std::string LlmClient::complete(const std::string& stage, const std::string& sample_id,
                                const std::string& system_prompt, const std::string& user_prompt) const {
    if (config_.mode == ClientMode::rule) return "";
    if (config_.mode == ClientMode::scripted) {
        auto it = transcript_.find({stage, sample_id});
        if (it == transcript_.end()) return "";
        return it->second;
    }
    httplib::Client client(config_.endpoint);
    client.set_read_timeout(120, 0);
    json req = {{"model", config_.model},
                {"temperature", config_.temperature},
                {"seed", config_.seed},
                {"system", system_prompt},
                {"user", user_prompt}};
    auto res = client.Post("/v1/complete", req.dump(), "application/json");
    if (!res) throw StageError(stage, "client unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw StageError(stage, "client HTTP status " + std::to_string(res->status));
    json j = json::parse(res->body);
    return j.at("text").get<std::string>();
}

namespace {

// Extracts the last balanced top-level JSON object from free-form text.
std::optional<json> extract_json_block(const std::string& text) {
    std::optional<json> found;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        int depth = 0;
        bool in_string = false;
        for (std::size_t j = i; j < text.size(); ++j) {
            char c = text[j];
            if (in_string) {
                if (c == '\\')
                    ++j;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            if (c == '{') ++depth;
            if (c == '}') {
                --depth;
                if (depth == 0) {
                    try {
                        found = json::parse(text.substr(i, j - i + 1));
                    } catch (const json::exception&) {
                    }
                    i = j;
                    break;
                }
            }
        }
    }
    return found;
}

bool valid_category(const std::string& c) {
    return c == "logical" || c == "physical" || c == "anatomical" || c == "other";
}

SemanticReport parse_semantic_reply(const std::string& reply) {
    auto block = extract_json_block(reply);
    if (!block) throw StageError("semantic", "reply carries no JSON block");
    const json& j = *block;
    SemanticReport r;
    r.raw_model_text = reply;
    if (!j.contains("verdict") || !j.contains("confidence"))
        throw StageError("semantic", "JSON block lacks verdict/confidence");
    r.verdict.label = parse_label(j.at("verdict").get<std::string>());
    r.verdict.confidence = j.at("confidence").get<double>();
    r.verdict.basis = VerdictBasis::semantic;
    if (!(r.verdict.confidence >= 0.0 && r.verdict.confidence <= 1.0))
        throw StageError("semantic", "confidence outside [0,1]");
    if (j.contains("anomalies")) {
        for (const auto& a : j.at("anomalies")) {
            Anomaly an;
            an.category = a.at("category").get<std::string>();
            if (!valid_category(an.category))
                throw StageError("semantic", "unknown anomaly category '" + an.category + "'");
            an.description = a.value("description", "");
            an.severity = a.value("severity", 0.0);
            if (!(an.severity >= 0.0 && an.severity <= 1.0))
                throw StageError("semantic", "anomaly severity outside [0,1]");
            r.anomalies.push_back(std::move(an));
        }
    }
    return r;
}

}  // namespace

SemanticReport stage1_semantic(const Sample& sample, const Guideline& guideline, const LlmClient& client) {
    const std::string user = "Analyze image sample '" + sample.id + "' (locator: " + sample.image_locator +
                             "). Finish with a JSON object: {\"verdict\": \"real|fake\", \"confidence\": 0..1, "
                             "\"anomalies\": [{\"category\", \"description\", \"severity\"}]}";
    std::string reply = client.complete("semantic", sample.id, guideline.text, user);
    try {
        return parse_semantic_reply(reply);
    } catch (const StageError&) {
        // One repair attempt, then surface the failure.
        reply = client.complete(client.mode() == ClientMode::scripted ? "semantic_repair" : "semantic",
                                sample.id, guideline.text,
                                user + "\nYour previous reply was malformed. Reply with only the JSON object.");
        return parse_semantic_reply(reply);
    }
}

SemanticReport semantic_from_score(double score, double threshold) {
    SemanticReport r;
    r.verdict.label = threshold_label(score, threshold);
    r.verdict.confidence = r.verdict.label == Label::fake ? score : 1.0 - score;
    r.verdict.basis = VerdictBasis::semantic;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "semantic analyzer score %.4f -> %s", score,
                  to_string(r.verdict.label).c_str());
    r.raw_model_text = buf;
    return r;
}

SignalReport stage2_signal(const Sample& sample, const Panel& panel,
                           const std::map<std::string, ExpertProfile>& profiles, const Guideline& guideline,
                           const LlmClient& client, const PipelineConfig& config) {
    if (panel.signal_experts().empty()) throw StageError("signal", "no signal experts registered");

    SignalReport report;
    double weighted_sum = 0.0, weight_total = 0.0;
    std::vector<Label> calls;
    for (const auto& reg : panel.signal_experts()) {
        SignalEntry entry;
        entry.expert_id = reg.expert_id;
        auto pit = profiles.find(reg.expert_id);
        try {
            entry.raw_score = score_sample(reg, sample);
        } catch (const ScoreError& e) {
            entry.failed = true;
            entry.error = e.what();
            report.entries.push_back(std::move(entry));
            continue;
        }
        double weight = 0.5;  // template / unprofiled default
        if (config.use_expert_profiles && pit != profiles.end()) {
            entry.calibrated_score = apply_calibration(pit->second.calibration, entry.raw_score);
            entry.desc_excerpt = pit->second.desc_text;
            entry.quality_excerpt = pit->second.quality_text;
            if (!pit->second.is_template) weight = std::max(0.0, 1.0 - pit->second.metrics.ece);
        } else {
            entry.calibrated_score = entry.raw_score;
            if (!config.use_expert_profiles) weight = 1.0;
        }
        weighted_sum += weight * entry.calibrated_score;
        weight_total += weight;
        calls.push_back(threshold_label(entry.calibrated_score, config.threshold));
        report.entries.push_back(std::move(entry));
    }

    if (weight_total == 0.0 && calls.empty()) throw StageError("signal", "all experts failed");
    report.aggregate_score = weight_total > 0.0 ? weighted_sum / weight_total : 0.5;
    report.verdict.label = threshold_label(report.aggregate_score, config.threshold);
    report.verdict.confidence = report.verdict.label == Label::fake ? report.aggregate_score
                                                                    : 1.0 - report.aggregate_score;
    report.verdict.basis = VerdictBasis::signal;
    report.disagreement_flag =
        std::adjacent_find(calls.begin(), calls.end(), std::not_equal_to<>()) != calls.end();

    if (client.mode() == ClientMode::live) {
        report.narrative = client.complete("signal", sample.id, guideline.text,
                                           "Summarize the signal panel findings for sample " + sample.id);
    } else {
        std::ostringstream os;
        os << "signal panel: ";
        for (const auto& e : report.entries) {
            if (e.failed)
                os << e.expert_id << "=failed ";
            else {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%s=%.4f ", e.expert_id.c_str(), e.calibrated_score);
                os << buf;
            }
        }
        char buf[96];
        std::snprintf(buf, sizeof(buf), "-> aggregate=%.4f verdict=%s", report.aggregate_score,
                      to_string(report.verdict.label).c_str());
        os << buf;
        report.narrative = os.str();
    }
    return report;
}

bool detect_conflict(const SemanticReport& semantic, const SignalReport& signal) {
    return semantic.verdict.label != signal.verdict.label;
}

std::optional<ClusterReport> stage3_cluster(const std::map<Modality, FeatureVector>& features,
                                            const std::vector<ClusteringProfile>& profiles,
                                            const Guideline& guideline, const LlmClient& client,
                                            const PipelineConfig& config, std::string* skip_note) {
    (void)guideline;
    (void)client;
    ClusterReport report;
    std::vector<const ClusteringProfile*> ordered;
    for (Modality m : {Modality::clip, Modality::srm, Modality::cfa})
        for (const auto& p : profiles)
            if (p.modality == m && features.count(m)) ordered.push_back(&p);

    if (ordered.empty()) {
        if (skip_note) *skip_note = "cluster stage skipped: no modality features available";
        return std::nullopt;
    }
    for (const auto* p : ordered) {
        ClusterEntry entry;
        entry.modality = p->modality;
        entry.cluster_id = assign_cluster(p->model, features.at(p->modality));
        const auto& rel = p->reliabilities.at(entry.cluster_id);
        entry.ranking_text = rel.text;
        entry.local_stats = rel.per_expert;
        entry.silhouette = p->quality.silhouette;
        entry.davies_bouldin = p->quality.davies_bouldin;
        entry.usable = rel.usable && p->quality.silhouette >= config.low_separability;
        report.entries.push_back(std::move(entry));
    }
    std::ostringstream os;
    os << "cluster context: ";
    for (const auto& e : report.entries)
        os << to_string(e.modality) << "#" << e.cluster_id << (e.usable ? "" : "(down-weighted)") << " ";
    report.narrative = os.str();
    return report;
}

std::vector<std::string> EvidenceSet::evidence_keys() const {
    std::vector<std::string> keys;
    if (semantic) keys.push_back("semantic.verdict");
    keys.push_back("signal.verdict");
    for (const auto& e : signal.entries) keys.push_back("signal.expert." + e.expert_id);
    if (cluster)
        for (const auto& e : cluster->entries) keys.push_back("cluster." + to_string(e.modality));
    if (arbitration) keys.push_back("arbitration.verdict");
    return keys;
}

namespace {

ArbitrationRecord rule_arbitrate(const EvidenceSet& evidence,
                                 const std::map<std::string, ExpertProfile>& profiles,
                                 const PipelineConfig& config) {
    ArbitrationRecord rec;

    std::vector<const ClusterEntry*> usable;
    if (evidence.cluster)
        for (const auto& e : evidence.cluster->entries)
            if (e.usable)
                usable.push_back(&e);
            else
                rec.downweighted_modalities.push_back(e.modality);

    double weighted_sum = 0.0, weight_total = 0.0;
    for (const auto& entry : evidence.signal.entries) {
        if (entry.failed) continue;
        double w;
        if (!usable.empty()) {
            double sum = 0.0;
            for (const auto* ce : usable) {
                auto it = ce->local_stats.find(entry.expert_id);
                sum += it != ce->local_stats.end() ? it->second.f1 : 0.0;
            }
            w = sum / static_cast<double>(usable.size());
        } else if (config.use_expert_profiles) {
            auto pit = profiles.find(entry.expert_id);
            w = (pit != profiles.end() && !pit->second.is_template)
                    ? std::max(0.0, 1.0 - pit->second.metrics.ece)
                    : 0.5;
        } else {
            w = 1.0;
        }
        rec.weights_used[entry.expert_id] = w;
        weighted_sum += w * entry.calibrated_score;
        weight_total += w;
    }
    const double expert_score = weight_total > 0.0 ? weighted_sum / weight_total
                                                   : evidence.signal.aggregate_score;

    double blend = expert_score;
    if (evidence.semantic) {
        const double sem = semantic_fake_probability(*evidence.semantic);
        blend = config.semantic_mix * sem + (1.0 - config.semantic_mix) * expert_score;
    }
    rec.blend_score = blend;
    rec.verdict.label = threshold_label(blend, config.threshold);
    rec.verdict.confidence = rec.verdict.label == Label::fake ? blend : 1.0 - blend;
    rec.verdict.basis = VerdictBasis::arbitration;

    if (evidence.semantic) rec.rationale.push_back("semantic.verdict");
    for (const auto& e : evidence.signal.entries)
        if (!e.failed) rec.rationale.push_back("signal.expert." + e.expert_id);
    for (const auto* ce : usable) rec.rationale.push_back("cluster." + to_string(ce->modality));
    return rec;
}

ArbitrationRecord parse_arbitration_reply(const std::string& reply, const EvidenceSet& evidence,
                                          double threshold) {
    auto block = extract_json_block(reply);
    if (!block) throw StageError("arbitration", "reply carries no JSON block");
    const json& j = *block;
    ArbitrationRecord rec;
    rec.verdict.label = parse_label(j.at("verdict").get<std::string>());
    rec.verdict.confidence = j.at("confidence").get<double>();
    rec.verdict.basis = VerdictBasis::arbitration;
    if (!(rec.verdict.confidence >= 0.0 && rec.verdict.confidence <= 1.0))
        throw StageError("arbitration", "confidence outside [0,1]");
    const auto keys = evidence.evidence_keys();
    if (!j.contains("rationale") || !j.at("rationale").is_array() || j.at("rationale").empty())
        throw StageError("arbitration", "missing rationale citations");
    for (const auto& k : j.at("rationale")) {
        const auto key = k.get<std::string>();
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw StageError("arbitration", "rationale cites unknown evidence key '" + key + "'");
        rec.rationale.push_back(key);
    }
    rec.blend_score = rec.verdict.label == Label::fake ? rec.verdict.confidence
                                                       : 1.0 - rec.verdict.confidence;
    (void)threshold;
    return rec;
}

}  // namespace

ArbitrationRecord arbitrate(const std::string& sample_id, const EvidenceSet& evidence,
                            const std::map<std::string, ExpertProfile>& profiles, const Guideline& guideline,
                            const LlmClient& client, const PipelineConfig& config) {
    // Live mode always asks the client; scripted mode does only when the
    // transcript carries a reply for this sample, otherwise the rule
    // arbiter keeps runs hermetic.
    const bool scripted_reply = client.mode() == ClientMode::scripted &&
                                !client.complete("arbitration", sample_id, "", "").empty();
    if (client.mode() == ClientMode::live || scripted_reply) {
        std::ostringstream ev;
        ev << "Evidence keys: ";
        for (const auto& k : evidence.evidence_keys()) ev << k << " ";
        ev << "\nReply with JSON {\"verdict\", \"confidence\", \"rationale\": [evidence keys]}";
        std::string reply = client.complete("arbitration", sample_id, guideline.text, ev.str());
        try {
            return parse_arbitration_reply(reply, evidence, config.threshold);
        } catch (const StageError&) {
            reply = client.complete("arbitration_repair", sample_id, guideline.text,
                                    ev.str() + "\nYour previous reply was invalid. Cite only listed keys.");
            return parse_arbitration_reply(reply, evidence, config.threshold);
        }
    }
    return rule_arbitrate(evidence, profiles, config);
}

double semantic_fake_probability(const SemanticReport& semantic) {
    return semantic.verdict.label == Label::fake ? semantic.verdict.confidence
                                                 : 1.0 - semantic.verdict.confidence;
}

Verdict majority_vote(const std::vector<Verdict>& verdicts) {
    if (verdicts.empty()) throw std::invalid_argument("majority_vote: empty input");
    std::size_t fake = 0;
    for (const auto& v : verdicts)
        if (v.label == Label::fake) ++fake;
    const std::size_t real = verdicts.size() - fake;
    Verdict out;
    out.label = fake >= real ? Label::fake : Label::real;  // ties go to fake
    out.confidence = static_cast<double>(std::max(fake, real)) / static_cast<double>(verdicts.size());
    out.basis = VerdictBasis::baseline;
    return out;
}

double probability_average(const std::vector<double>& scores, const std::vector<double>& weights) {
    if (scores.size() != weights.size()) throw std::invalid_argument("probability_average: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (weights[i] < 0.0) throw std::invalid_argument("probability_average: negative weight");
        num += weights[i] * scores[i];
        den += weights[i];
    }
    if (den == 0.0) throw std::invalid_argument("probability_average: zero total weight");
    return num / den;
}

}  // namespace agentfox
