// Command-line surface: profiling, benchmark construction, inference,
// evaluation, and panel simulation. Exit codes: 0 success, 1 partial
// failure, 2 usage/configuration error.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "agentfox/benchmark.hpp"
#include "agentfox/pipeline.hpp"
#include "agentfox/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agentfox;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw UsageError("missing " + what + ": " + path);
}

// Replay score lookup: expert id -> sample id -> score.
std::map<std::string, std::map<std::string, double>> load_score_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open score file: " + path);
    std::map<std::string, std::map<std::string, double>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        out[j.at("expert_id").get<std::string>()][j.at("sample_id").get<std::string>()] =
            j.at("score").get<double>();
    }
    return out;
}

Panel bind_replay_scores(Panel panel, const std::string& score_path) {
    // Registrations whose replay adapter has no manifest get the shared
    // score file injected so the panel is usable straight away.
    auto scores = load_score_file(score_path);
    Panel bound;
    for (const auto& reg : panel.signal_experts()) {
        ExpertRegistration r = reg;
        if (auto* rep = std::get_if<ReplayAdapter>(&r.adapter); rep && !rep->scores) {
            auto it = scores.find(r.expert_id);
            rep->scores = std::make_shared<std::map<std::string, double>>(
                it != scores.end() ? it->second : std::map<std::string, double>{});
            if (rep->manifest_path.empty()) rep->manifest_path = score_path;
        }
        bound.register_expert(std::move(r));
    }
    if (panel.semantic_analyzer()) {
        ExpertRegistration r = *panel.semantic_analyzer();
        if (auto* rep = std::get_if<ReplayAdapter>(&r.adapter); rep && !rep->scores) {
            auto it = scores.find(r.expert_id);
            rep->scores = std::make_shared<std::map<std::string, double>>(
                it != scores.end() ? it->second : std::map<std::string, double>{});
            if (rep->manifest_path.empty()) rep->manifest_path = score_path;
        }
        bound.register_expert(std::move(r), true);
    }
    return bound;
}

LabeledScores labeled_scores_for(const ExpertRegistration& reg, const DatasetManifest& manifest) {
    LabeledScores out;
    for (const auto& s : manifest.samples) {
        try {
            out.emplace_back(score_sample(reg, s), s.ground_truth);
        } catch (const ScoreError&) {
            // Samples the expert cannot score are skipped during profiling.
        }
    }
    return out;
}

std::map<std::string, ExpertProfile> load_profile_store(const std::string& dir, const Panel& panel) {
    std::map<std::string, ExpertProfile> out;
    for (const auto& reg : panel.signal_experts()) {
        const auto path = expert_profile_path(dir, reg.expert_id);
        if (fs::exists(path)) out[reg.expert_id] = load_expert_profile(path);
    }
    return out;
}

std::vector<ClusteringProfile> load_clustering_store(const std::string& dir) {
    std::vector<ClusteringProfile> out;
    for (Modality m : {Modality::clip, Modality::srm, Modality::cfa}) {
        const auto path = clustering_profile_path(dir, m);
        if (fs::exists(path)) out.push_back(load_clustering_profile(path));
    }
    return out;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed,
                 bool seed_set) {
    require_file(spec_path, "panel spec");
    auto spec = load_panel_spec(spec_path);
    if (seed_set) spec.seed = seed;
    spec.validate();
    fs::create_directories(out_dir);
    auto panel = generate_panel(spec);
    write_panel_artifacts(panel, out_dir);
    save_panel_spec(spec, (fs::path(out_dir) / "spec.json").string());
    json header = {{"command", "simulate"}, {"seed", spec.seed}, {"samples", spec.samples}};
    std::ofstream((fs::path(out_dir) / "run.json").string()) << header.dump(2) << "\n";
    std::cout << "simulated " << spec.samples << " samples into " << out_dir << "\n";
    return 0;
}

int cmd_profile_build(const std::string& panel_path, const std::string& train_path,
                      const std::string& val_path, const std::string& scores_path,
                      const std::string& features_path, const std::string& out_dir, std::uint64_t seed,
                      const std::vector<std::string>& k_overrides) {
    require_file(panel_path, "panel file");
    require_file(train_path, "train manifest");
    require_file(val_path, "val manifest");

    Panel panel = Panel::load(panel_path);
    if (!scores_path.empty()) {
        require_file(scores_path, "score file");
        panel = bind_replay_scores(std::move(panel), scores_path);
    }
    auto train = load_manifest(train_path);
    auto val = load_manifest(val_path);
    train.validate();
    val.validate();
    fs::create_directories(out_dir);

    std::map<std::string, ExpertProfile> profiles;
    for (const auto& reg : panel.signal_experts()) {
        auto p = build_expert_profile(reg.expert_id, reg.desc_text, labeled_scores_for(reg, train),
                                      labeled_scores_for(reg, val));
        save_expert_profile(p, out_dir);
        profiles[reg.expert_id] = p;
        std::cout << "expert " << reg.expert_id << ": " << p.quality_text << "\n";
    }

    if (!features_path.empty()) {
        require_file(features_path, "feature sidecar");
        auto features = load_features(features_path);
        std::map<Modality, std::optional<int>> pinned;
        for (const auto& ov : k_overrides) {
            auto eq = ov.find('=');
            if (eq == std::string::npos) throw UsageError("bad --k override (want modality=K): " + ov);
            pinned[parse_modality(ov.substr(0, eq))] = std::stoi(ov.substr(eq + 1));
        }
        for (Modality m : {Modality::clip, Modality::srm, Modality::cfa}) {
            std::vector<FeatureVector> train_feats;
            for (const auto& s : train.samples) {
                auto it = features.find({s.id, m});
                if (it != features.end()) train_feats.push_back(it->second);
            }
            if (train_feats.empty()) continue;
            std::vector<ValObservation> obs;
            for (const auto& s : val.samples) {
                auto it = features.find({s.id, m});
                if (it == features.end()) continue;
                ValObservation o;
                o.features = it->second;
                o.ground_truth = s.ground_truth;
                for (const auto& reg : panel.signal_experts()) {
                    try {
                        const double raw = score_sample(reg, s);
                        const auto pit = profiles.find(reg.expert_id);
                        o.calibrated_scores[reg.expert_id] =
                            pit != profiles.end() ? apply_calibration(pit->second.calibration, raw) : raw;
                    } catch (const ScoreError&) {
                    }
                }
                obs.push_back(std::move(o));
            }
            auto k_it = pinned.find(m);
            auto profile = build_clustering_profile(m, train_feats,
                                                    obs, k_it != pinned.end() ? k_it->second : std::nullopt,
                                                    seed);
            save_clustering_profile(profile, out_dir);
            std::cout << "clustering " << to_string(m) << ": k=" << profile.model.k << "; "
                      << profile.quality.text << "\n";
        }
    }

    json header = {{"command", "profile-build"}, {"seed", seed}, {"experts", profiles.size()}};
    std::ofstream((fs::path(out_dir) / "store.json").string()) << header.dump(2) << "\n";
    return 0;
}

int cmd_validate_store(const std::string& dir) {
    int checked = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("expert_profile_", 0) == 0) {
            auto p = load_expert_profile(entry.path().string());
            if (p.expert_id.empty()) throw std::runtime_error("empty expert id in " + name);
            if (p.metrics.ece < 0.0) throw std::runtime_error("negative ECE in " + name);
            for (double v : p.calibration.params)
                if (!std::isfinite(v)) throw std::runtime_error("non-finite parameter in " + name);
            ++checked;
        } else if (name.rfind("clustering_profile_", 0) == 0) {
            auto p = load_clustering_profile(entry.path().string());
            if (p.model.k != static_cast<int>(p.model.centroids.size()))
                throw std::runtime_error("centroid count mismatch in " + name);
            if (static_cast<int>(p.reliabilities.size()) != p.model.k)
                throw std::runtime_error("reliability count mismatch in " + name);
            ++checked;
        }
    }
    std::cout << "store ok: " << checked << " profiles validated\n";
    return 0;
}

int cmd_sample_benchmark(const std::vector<std::string>& manifest_paths, const std::string& panel_path,
                         const std::string& scores_path, const std::string& out_path, StratPlan plan,
                         std::uint64_t seed) {
    require_file(panel_path, "panel file");
    Panel panel = Panel::load(panel_path);
    if (!scores_path.empty()) {
        require_file(scores_path, "score file");
        panel = bind_replay_scores(std::move(panel), scores_path);
    }
    plan.j = static_cast<int>(panel.signal_experts().size());

    std::vector<std::pair<Sample, ConflictVector>> pool;
    std::set<std::string> datasets;
    for (const auto& mp : manifest_paths) {
        require_file(mp, "input manifest");
        auto manifest = load_manifest(mp);
        for (const auto& s : manifest.samples) {
            std::vector<double> calibrated;
            bool complete = true;
            for (const auto& reg : panel.signal_experts()) {
                try {
                    calibrated.push_back(score_sample(reg, s));
                } catch (const ScoreError&) {
                    complete = false;
                    break;
                }
            }
            if (!complete) continue;
            pool.emplace_back(s, conflict_vector(calibrated, s.ground_truth, plan.threshold));
            datasets.insert(s.source_dataset);
        }
    }
    plan.d = static_cast<int>(datasets.size());
    auto manifest = stratified_sample(pool, plan, seed);
    save_benchmark_manifest(manifest, out_path);
    std::cout << "benchmark: " << manifest.realized_count << "/" << manifest.target_count << " samples ("
              << manifest.coverage_percent() << " coverage), seed " << seed << "\n";
    return 0;
}

int cmd_infer(const std::string& panel_path, const std::string& profile_dir,
              const std::string& manifest_path, const std::string& features_path,
              const std::string& scores_path, const std::string& guidelines_dir,
              const std::string& out_dir, const std::string& mode, const std::string& transcript,
              const std::string& endpoint, const std::string& format, std::uint64_t seed) {
    require_file(panel_path, "panel file");
    require_file(manifest_path, "input manifest");
    Panel panel = Panel::load(panel_path);
    if (!scores_path.empty()) {
        require_file(scores_path, "score file");
        panel = bind_replay_scores(std::move(panel), scores_path);
    }
    auto manifest = load_manifest(manifest_path);
    FeatureTable features;
    if (!features_path.empty()) {
        require_file(features_path, "feature sidecar");
        features = load_features(features_path);
    }

    PipelineConfig config;
    config.guidelines = GuidelineSet::load(guidelines_dir);
    config.client.mode = parse_client_mode(mode);
    config.client.transcript_path = transcript;
    config.client.endpoint = endpoint;
    config.client.seed = seed;
    config.seed = seed;
    if (const char* env = std::getenv("AGENTFOX_CLIENT_ENDPOINT")) config.client.endpoint = env;

    Pipeline pipeline(panel, load_profile_store(profile_dir, panel), load_clustering_store(profile_dir),
                      config);
    fs::create_directories(out_dir);
    json header = {{"command", "infer"},
                   {"seed", seed},
                   {"mode", mode},
                   {"config_fingerprint", pipeline.fingerprint()}};
    std::ofstream((fs::path(out_dir) / "run.json").string()) << header.dump(2) << "\n";

    int failures = 0;
    const bool markdown = format == "markdown";
    for (const auto& s : manifest.samples) {
        std::map<Modality, FeatureVector> feats;
        for (Modality m : {Modality::clip, Modality::srm, Modality::cfa}) {
            auto it = features.find({s.id, m});
            if (it != features.end()) feats[m] = it->second;
        }
        try {
            auto report = pipeline.run(s, feats);
            const auto path = fs::path(out_dir) / (s.id + (markdown ? ".md" : ".json"));
            std::ofstream(path.string())
                << emit(report, markdown ? ReportFormat::markdown : ReportFormat::json);
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "sample " << s.id << " failed: " << e.what() << "\n";
        }
    }
    std::cout << "inference: " << manifest.samples.size() - failures << "/" << manifest.samples.size()
              << " reports written to " << out_dir << "\n";
    return failures > 0 ? 1 : 0;
}

int cmd_evaluate(const std::string& reports_dir, const std::string& manifest_path,
                 const std::string& out_prefix, std::uint64_t seed) {
    require_file(manifest_path, "input manifest");
    auto manifest = load_manifest(manifest_path);

    struct Row {
        Label pred, gt;
        std::string dataset;
        int cell = -1;
    };
    std::vector<Row> rows;
    for (const auto& s : manifest.samples) {
        const auto path = fs::path(reports_dir) / (s.id + ".json");
        if (!fs::exists(path)) continue;
        std::ifstream in(path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        auto report = parse_report_json(buf.str());
        Row row;
        row.pred = report.verdict.label;
        row.gt = s.ground_truth;
        row.dataset = s.source_dataset;
        std::vector<double> calibrated;
        for (const auto& e : report.evidence.signal.entries)
            if (!e.failed) calibrated.push_back(e.calibrated_score);
        if (!calibrated.empty() &&
            calibrated.size() == report.evidence.signal.entries.size())
            row.cell = conflict_vector(calibrated, s.ground_truth, 0.5).cell_index();
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw UsageError("no reports found under " + reports_dir);

    auto metrics_of = [](const std::vector<Row>& rs) {
        std::vector<std::pair<Label, Label>> pairs;
        for (const auto& r : rs) pairs.emplace_back(r.pred, r.gt);
        return f1_acc(pairs);
    };

    json summary;
    summary["command"] = "evaluate";
    summary["seed"] = seed;
    const auto overall = metrics_of(rows);
    summary["overall"] = {{"f1", overall.f1}, {"acc", overall.acc}, {"count", rows.size()}};

    std::map<std::string, std::vector<Row>> by_dataset;
    std::map<int, std::vector<Row>> by_cell;
    for (const auto& r : rows) {
        by_dataset[r.dataset].push_back(r);
        if (r.cell >= 0) by_cell[r.cell].push_back(r);
    }
    json datasets = json::object();
    for (const auto& [name, rs] : by_dataset) {
        const auto m = metrics_of(rs);
        datasets[name] = {{"f1", m.f1}, {"acc", m.acc}, {"count", rs.size()}};
    }
    summary["per_dataset"] = datasets;
    json strata = json::array();
    for (const auto& [cell, rs] : by_cell) {
        const auto m = metrics_of(rs);
        strata.push_back({{"cell", cell}, {"f1", m.f1}, {"acc", m.acc}, {"count", rs.size()}});
    }
    summary["per_stratum"] = strata;
    std::ofstream(out_prefix + ".json") << summary.dump(2) << "\n";

    // Aligned F1/ACC table plus a stratum-curve CSV.
    std::ostringstream table;
    table << "# seed " << seed << "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %8s %8s %8s\n", "dataset", "f1", "acc", "count");
    table << line;
    for (const auto& [name, rs] : by_dataset) {
        const auto m = metrics_of(rs);
        std::snprintf(line, sizeof(line), "%-20s %8.4f %8.4f %8zu\n", name.c_str(), m.f1, m.acc, rs.size());
        table << line;
    }
    std::snprintf(line, sizeof(line), "%-20s %8.4f %8.4f %8zu\n", "overall", overall.f1, overall.acc,
                  rows.size());
    table << line;
    std::ofstream(out_prefix + ".txt") << table.str();

    std::ofstream csv(out_prefix + "_strata.csv");
    csv << "cell,f1,acc,count\n";
    for (const auto& [cell, rs] : by_cell) {
        const auto m = metrics_of(rs);
        csv << cell << "," << m.f1 << "," << m.acc << "," << rs.size() << "\n";
    }
    std::cout << table.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AgentFoX: calibrated multi-expert AI-generated-image detection"};
    app.require_subcommand(1);
    std::uint64_t seed = 42;
    app.add_option("--seed", seed, "deterministic seed, honored by every command")->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "generate a synthetic expert panel");
    std::string sim_spec, sim_out;
    sim->add_option("--spec", sim_spec, "panel spec JSON")->required();
    sim->add_option("--out", sim_out, "output directory")->required();

    auto* pb = app.add_subcommand("profile-build", "build expert and clustering profiles");
    std::string pb_panel, pb_train, pb_val, pb_scores, pb_features, pb_out;
    std::vector<std::string> pb_k;
    pb->add_option("--panel", pb_panel, "panel JSON")->required();
    pb->add_option("--train", pb_train, "profile-train manifest")->required();
    pb->add_option("--val", pb_val, "profile-val manifest")->required();
    pb->add_option("--scores", pb_scores, "replay score file");
    pb->add_option("--features", pb_features, "feature sidecar");
    pb->add_option("--out", pb_out, "profile store directory")->required();
    pb->add_option("--k", pb_k, "pinned cluster count, e.g. clip=12 (repeatable)");

    auto* vs = app.add_subcommand("validate-store", "re-load a profile store and check invariants");
    std::string vs_dir;
    vs->add_option("--store", vs_dir, "profile store directory")->required();

    auto* sb = app.add_subcommand("sample-benchmark", "construct a conflict-stratified benchmark");
    std::vector<std::string> sb_manifests;
    std::string sb_panel, sb_scores, sb_out;
    int sb_n = 15;
    sb->add_option("--manifest", sb_manifests, "input manifests (repeatable)")->required();
    sb->add_option("--panel", sb_panel, "panel JSON")->required();
    sb->add_option("--scores", sb_scores, "replay score file");
    sb->add_option("--out", sb_out, "output benchmark manifest")->required();
    sb->add_option("--per-bucket", sb_n, "samples per (cell, dataset)")->capture_default_str();

    auto* inf = app.add_subcommand("infer", "run the four-stage pipeline over a manifest");
    std::string inf_panel, inf_profiles, inf_manifest, inf_features, inf_scores, inf_out;
    std::string inf_guidelines = "guidelines";
    std::string inf_mode = "rule", inf_transcript, inf_endpoint, inf_format = "json";
    inf->add_option("--panel", inf_panel, "panel JSON")->required();
    inf->add_option("--profiles", inf_profiles, "profile store directory")->required();
    inf->add_option("--manifest", inf_manifest, "input manifest")->required();
    inf->add_option("--features", inf_features, "feature sidecar");
    inf->add_option("--scores", inf_scores, "replay score file");
    inf->add_option("--guidelines", inf_guidelines, "guideline directory")->capture_default_str();
    inf->add_option("--out", inf_out, "report output directory")->required();
    inf->add_option("--mode", inf_mode, "client mode: live|scripted|rule")->capture_default_str();
    inf->add_option("--transcript", inf_transcript, "scripted-mode transcript JSONL");
    inf->add_option("--endpoint", inf_endpoint, "live-mode completion endpoint");
    inf->add_option("--format", inf_format, "report format: json|markdown")->capture_default_str();

    auto* ev = app.add_subcommand("evaluate", "score a report directory against ground truth");
    std::string ev_reports, ev_manifest, ev_out;
    ev->add_option("--reports", ev_reports, "report directory")->required();
    ev->add_option("--manifest", ev_manifest, "ground-truth manifest")->required();
    ev->add_option("--out", ev_out, "output prefix (writes .json/.txt/_strata.csv)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return cmd_simulate(sim_spec, sim_out, seed, app.count("--seed") > 0);
        if (pb->parsed())
            return cmd_profile_build(pb_panel, pb_train, pb_val, pb_scores, pb_features, pb_out, seed, pb_k);
        if (vs->parsed()) return cmd_validate_store(vs_dir);
        if (sb->parsed()) {
            StratPlan plan;
            plan.n = sb_n;
            return cmd_sample_benchmark(sb_manifests, sb_panel, sb_scores, sb_out, plan, seed);
        }
        if (inf->parsed())
            return cmd_infer(inf_panel, inf_profiles, inf_manifest, inf_features, inf_scores,
                             inf_guidelines, inf_out, inf_mode, inf_transcript, inf_endpoint, inf_format,
                             seed);
        if (ev->parsed()) return cmd_evaluate(ev_reports, ev_manifest, ev_out, seed);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
