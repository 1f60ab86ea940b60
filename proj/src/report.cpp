#include "agentfox/report.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace agentfox {

using nlohmann::json;

namespace {

json verdict_to_json(const Verdict& v) {
    return {{"label", to_string(v.label)}, {"confidence", v.confidence}, {"basis", to_string(v.basis)}};
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.label = parse_label(j.at("label").get<std::string>());
    v.confidence = j.at("confidence").get<double>();
    const auto basis = j.at("basis").get<std::string>();
    if (basis == "semantic")
        v.basis = VerdictBasis::semantic;
    else if (basis == "signal")
        v.basis = VerdictBasis::signal;
    else if (basis == "arbitration")
        v.basis = VerdictBasis::arbitration;
    else
        v.basis = VerdictBasis::baseline;
    return v;
}

json semantic_to_json(const SemanticReport& r) {
    json anomalies = json::array();
    for (const auto& a : r.anomalies)
        anomalies.push_back({{"category", a.category}, {"description", a.description}, {"severity", a.severity}});
    return {{"verdict", verdict_to_json(r.verdict)}, {"anomalies", anomalies},
            {"raw_model_text", r.raw_model_text}};
}

SemanticReport semantic_from_json(const json& j) {
    SemanticReport r;
    r.verdict = verdict_from_json(j.at("verdict"));
    r.raw_model_text = j.at("raw_model_text").get<std::string>();
    for (const auto& a : j.at("anomalies"))
        r.anomalies.push_back({a.at("category").get<std::string>(), a.at("description").get<std::string>(),
                               a.at("severity").get<double>()});
    return r;
}

json signal_to_json(const SignalReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries)
        entries.push_back({{"expert_id", e.expert_id},
                           {"raw_score", e.raw_score},
                           {"calibrated_score", e.calibrated_score},
                           {"desc_excerpt", e.desc_excerpt},
                           {"quality_excerpt", e.quality_excerpt},
                           {"failed", e.failed},
                           {"error", e.error}});
    return {{"entries", entries},
            {"aggregate_score", r.aggregate_score},
            {"verdict", verdict_to_json(r.verdict)},
            {"disagreement_flag", r.disagreement_flag},
            {"narrative", r.narrative}};
}

SignalReport signal_from_json(const json& j) {
    SignalReport r;
    for (const auto& e : j.at("entries")) {
        SignalEntry entry;
        entry.expert_id = e.at("expert_id").get<std::string>();
        entry.raw_score = e.at("raw_score").get<double>();
        entry.calibrated_score = e.at("calibrated_score").get<double>();
        entry.desc_excerpt = e.at("desc_excerpt").get<std::string>();
        entry.quality_excerpt = e.at("quality_excerpt").get<std::string>();
        entry.failed = e.at("failed").get<bool>();
        entry.error = e.at("error").get<std::string>();
        r.entries.push_back(std::move(entry));
    }
    r.aggregate_score = j.at("aggregate_score").get<double>();
    r.verdict = verdict_from_json(j.at("verdict"));
    r.disagreement_flag = j.at("disagreement_flag").get<bool>();
    r.narrative = j.at("narrative").get<std::string>();
    return r;
}

json cluster_to_json(const ClusterReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries) {
        json stats = json::object();
        for (const auto& [id, s] : e.local_stats)
            stats[id] = {{"f1", s.f1}, {"acc", s.acc}, {"support", s.support}};
        entries.push_back({{"modality", to_string(e.modality)},
                           {"cluster_id", e.cluster_id},
                           {"ranking_text", e.ranking_text},
                           {"local_stats", stats},
                           {"silhouette", e.silhouette},
                           {"davies_bouldin", e.davies_bouldin},
                           {"usable", e.usable}});
    }
    return {{"entries", entries}, {"narrative", r.narrative}};
}

ClusterReport cluster_from_json(const json& j) {
    ClusterReport r;
    for (const auto& e : j.at("entries")) {
        ClusterEntry entry;
        entry.modality = parse_modality(e.at("modality").get<std::string>());
        entry.cluster_id = e.at("cluster_id").get<int>();
        entry.ranking_text = e.at("ranking_text").get<std::string>();
        for (const auto& [id, s] : e.at("local_stats").items())
            entry.local_stats[id] = {s.at("f1").get<double>(), s.at("acc").get<double>(),
                                     s.at("support").get<std::size_t>()};
        entry.silhouette = e.at("silhouette").get<double>();
        entry.davies_bouldin = e.at("davies_bouldin").get<double>();
        entry.usable = e.at("usable").get<bool>();
        r.entries.push_back(std::move(entry));
    }
    r.narrative = j.at("narrative").get<std::string>();
    return r;
}

json arbitration_to_json(const ArbitrationRecord& r) {
    json mods = json::array();
    for (Modality m : r.downweighted_modalities) mods.push_back(to_string(m));
    return {{"verdict", verdict_to_json(r.verdict)},
            {"rationale", r.rationale},
            {"weights_used", r.weights_used},
            {"downweighted_modalities", mods},
            {"blend_score", r.blend_score}};
}

ArbitrationRecord arbitration_from_json(const json& j) {
    ArbitrationRecord r;
    r.verdict = verdict_from_json(j.at("verdict"));
    r.rationale = j.at("rationale").get<std::vector<std::string>>();
    for (const auto& [id, w] : j.at("weights_used").items()) r.weights_used[id] = w.get<double>();
    for (const auto& m : j.at("downweighted_modalities"))
        r.downweighted_modalities.push_back(parse_modality(m.get<std::string>()));
    r.blend_score = j.at("blend_score").get<double>();
    return r;
}

json evidence_to_json(const EvidenceSet& e) {
    json j;
    if (e.semantic) j["semantic"] = semantic_to_json(*e.semantic);
    j["signal"] = signal_to_json(e.signal);
    if (e.cluster) j["cluster"] = cluster_to_json(*e.cluster);
    if (e.arbitration) j["arbitration"] = arbitration_to_json(*e.arbitration);
    if (!e.cluster_skip_note.empty()) j["cluster_skip_note"] = e.cluster_skip_note;
    return j;
}

EvidenceSet evidence_from_json(const json& j) {
    EvidenceSet e;
    if (j.contains("semantic")) e.semantic = semantic_from_json(j.at("semantic"));
    e.signal = signal_from_json(j.at("signal"));
    if (j.contains("cluster")) e.cluster = cluster_from_json(j.at("cluster"));
    if (j.contains("arbitration")) e.arbitration = arbitration_from_json(j.at("arbitration"));
    e.cluster_skip_note = j.value("cluster_skip_note", "");
    return e;
}

std::string verdict_summary(const Verdict& v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s (confidence %.4f)", to_string(v.label).c_str(), v.confidence);
    return buf;
}

}  // namespace

ForensicReport compile_report(const std::string& sample_id, const EvidenceSet& evidence,
                              const Guideline& guideline_report, const LlmClient* renderer,
                              const std::string& fingerprint) {
    // Cluster evidence only ever arrives together with arbitration; the
    // reverse (arbitration without cluster) covers the no-features skip.
    if (evidence.cluster && !evidence.arbitration)
        throw std::invalid_argument("compile_report: cluster evidence without arbitration");

    ForensicReport report;
    report.sample_id = sample_id;
    report.evidence = evidence;
    report.config_fingerprint = fingerprint;

    std::string governing_key;
    if (evidence.arbitration) {
        report.verdict = evidence.arbitration->verdict;
        governing_key = "arbitration.verdict";
    } else if (evidence.semantic) {
        if (evidence.semantic->verdict.label != evidence.signal.verdict.label)
            throw std::invalid_argument(
                "compile_report: non-conflict evidence with differing stage verdicts");
        report.verdict = evidence.signal.verdict;
        governing_key = "signal.verdict";
    } else {
        report.verdict = evidence.signal.verdict;
        governing_key = "signal.verdict";
    }

    int step = 0;
    if (evidence.semantic)
        report.provenance.push_back({"stage1_semantic", "semantic.verdict",
                                     verdict_summary(evidence.semantic->verdict), ++step});
    report.provenance.push_back(
        {"stage2_signal", "signal.verdict", verdict_summary(evidence.signal.verdict), ++step});
    if (evidence.cluster)
        report.provenance.push_back(
            {"stage3_cluster", "cluster." + to_string(evidence.cluster->entries.front().modality),
             evidence.cluster->narrative, ++step});
    if (evidence.arbitration)
        report.provenance.push_back({"stage3_arbitration", "arbitration.verdict",
                                     verdict_summary(evidence.arbitration->verdict), ++step});
    report.provenance.push_back({"stage4_report", governing_key,
                                 "final verdict " + verdict_summary(report.verdict), ++step});

    if (renderer != nullptr && renderer->mode() == ClientMode::live) {
        const std::string reply = renderer->complete(
            "report", sample_id, guideline_report.text,
            "Write the forensic report narrative. Do not change the verdict: " + verdict_summary(report.verdict));
        report.narrative = reply;
        // The renderer never re-decides; a contradicting narrative is kept
        // but the discrepancy is logged in the trace.
        auto block_pos = reply.find("\"verdict\"");
        if (block_pos != std::string::npos) {
            try {
                auto j = json::parse(reply.substr(reply.find('{')));
                if (j.contains("verdict") &&
                    parse_label(j.at("verdict").get<std::string>()) != report.verdict.label)
                    report.provenance.push_back({"stage4_report", governing_key,
                                                 "renderer verdict discrepancy ignored", ++step});
            } catch (const json::exception&) {
            }
        }
    } else {
        std::ostringstream os;
        os << "Verdict " << to_string(report.verdict.label) << " via "
           << to_string(report.verdict.basis) << ". ";
        if (evidence.semantic) os << "Semantic: " << verdict_summary(evidence.semantic->verdict) << ". ";
        os << "Signal: " << verdict_summary(evidence.signal.verdict) << ".";
        if (evidence.arbitration)
            os << " Arbitration: " << verdict_summary(evidence.arbitration->verdict) << ".";
        report.narrative = os.str();
    }
    return report;
}

std::string emit(const ForensicReport& report, ReportFormat format) {
    if (format == ReportFormat::json) {
        json j;
        j["sample_id"] = report.sample_id;
        j["verdict"] = verdict_to_json(report.verdict);
        json trace = json::array();
        for (const auto& t : report.provenance)
            trace.push_back(
                {{"stage", t.stage}, {"evidence_key", t.evidence_key}, {"summary", t.summary}, {"step", t.step}});
        j["provenance"] = trace;
        j["evidence"] = evidence_to_json(report.evidence);
        j["config_fingerprint"] = report.config_fingerprint;
        j["narrative"] = report.narrative;
        return j.dump(2) + "\n";
    }

    std::ostringstream os;
    os << "# Forensic Report: " << report.sample_id << "\n\n";
    os << "## Semantic Analysis\n\n";
    if (report.evidence.semantic) {
        os << verdict_summary(report.evidence.semantic->verdict) << "\n";
        for (const auto& a : report.evidence.semantic->anomalies)
            os << "- [" << a.category << "] " << a.description << " (severity " << a.severity << ")\n";
    } else {
        os << "unavailable\n";
    }
    os << "\n## Signal Analysis\n\n";
    os << report.evidence.signal.narrative << "\n";
    if (report.evidence.arbitration) {
        os << "\n## Conflict Resolution\n\n";
        if (report.evidence.cluster) os << report.evidence.cluster->narrative << "\n";
        os << verdict_summary(report.evidence.arbitration->verdict) << "\n";
    }
    os << "\n## Verdict\n\n";
    os << verdict_summary(report.verdict) << "\n";
    return os.str();
}

ForensicReport parse_report_json(const std::string& text) {
    json j = json::parse(text);
    ForensicReport r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.verdict = verdict_from_json(j.at("verdict"));
    for (const auto& t : j.at("provenance"))
        r.provenance.push_back({t.at("stage").get<std::string>(), t.at("evidence_key").get<std::string>(),
                                t.at("summary").get<std::string>(), t.at("step").get<int>()});
    r.evidence = evidence_from_json(j.at("evidence"));
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.narrative = j.at("narrative").get<std::string>();
    return r;
}

std::string config_fingerprint(const Panel& panel, const std::map<std::string, ExpertProfile>& profiles,
                               const std::vector<ClusteringProfile>& clustering,
                               const GuidelineSet& guidelines, std::uint64_t seed) {
    json j;
    json experts = json::array();
    for (const auto& reg : panel.signal_experts())
        experts.push_back({{"id", reg.expert_id}, {"ordinal", reg.ordinal}, {"desc", reg.desc_text}});
    if (panel.semantic_analyzer()) experts.push_back({{"id", panel.semantic_analyzer()->expert_id}});
    j["panel"] = experts;
    json profs = json::object();
    for (const auto& [id, p] : profiles)
        profs[id] = {{"method", to_string(p.calibration.method)},
                     {"params", p.calibration.params},
                     {"ece", p.metrics.ece},
                     {"brier", p.metrics.brier},
                     {"is_template", p.is_template}};
    j["expert_profiles"] = profs;
    json clus = json::array();
    for (const auto& c : clustering)
        clus.push_back({{"modality", to_string(c.modality)},
                        {"k", c.model.k},
                        {"seed", c.model.seed},
                        {"centroids", c.model.centroids},
                        {"silhouette", c.quality.silhouette}});
    j["clustering_profiles"] = clus;
    j["guidelines"] = {{"semantic", guidelines.semantic.text},
                       {"expert", guidelines.expert.text},
                       {"cluster", guidelines.cluster.text},
                       {"report", guidelines.report.text}};
    j["seed"] = seed;
    return hash_content(j.dump());
}

}  // namespace agentfox
