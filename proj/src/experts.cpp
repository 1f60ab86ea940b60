#include "agentfox/experts.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "agentfox/clustering.hpp"
#include "httplib.h"
#include "json.hpp"

namespace agentfox {

using nlohmann::json;

void Panel::register_expert(ExpertRegistration reg, bool is_semantic) {
    if (find(reg.expert_id) != nullptr)
        throw std::invalid_argument("register_expert: duplicate id '" + reg.expert_id + "'");
    reg.ordinal = next_ordinal_++;
    if (is_semantic) {
        if (semantic_.has_value())
            throw std::invalid_argument("register_expert: semantic analyzer already registered");
        semantic_ = std::move(reg);
    } else {
        signal_.push_back(std::move(reg));
    }
}

void Panel::remove_expert(const std::string& expert_id) {
    if (semantic_ && semantic_->expert_id == expert_id) {
        semantic_.reset();
        return;
    }
    auto it = std::find_if(signal_.begin(), signal_.end(),
                           [&](const ExpertRegistration& r) { return r.expert_id == expert_id; });
    if (it == signal_.end()) throw std::invalid_argument("remove_expert: unknown id '" + expert_id + "'");
    signal_.erase(it);
}

const ExpertRegistration* Panel::find(const std::string& expert_id) const {
    for (const auto& r : signal_)
        if (r.expert_id == expert_id) return &r;
    if (semantic_ && semantic_->expert_id == expert_id) return &*semantic_;
    return nullptr;
}

static json adapter_to_json(const Adapter& a) {
    json j;
    if (const auto* h = std::get_if<HttpAdapter>(&a)) {
        j["type"] = "http_service";
        j["endpoint"] = h->endpoint;
    } else if (const auto* s = std::get_if<SubprocessAdapter>(&a)) {
        j["type"] = "subprocess";
        j["command"] = s->command;
    } else {
        j["type"] = "replay";
        j["manifest_path"] = std::get<ReplayAdapter>(a).manifest_path;
    }
    return j;
}

static Adapter adapter_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "http_service") return HttpAdapter{j.at("endpoint").get<std::string>()};
    if (type == "subprocess") return SubprocessAdapter{j.at("command").get<std::string>()};
    if (type == "replay") return ReplayAdapter{j.at("manifest_path").get<std::string>(), nullptr};
    throw std::invalid_argument("unknown adapter type: " + type);
}

static json reg_to_json(const ExpertRegistration& r) {
    return {{"expert_id", r.expert_id},
            {"adapter", adapter_to_json(r.adapter)},
            {"desc_text", r.desc_text},
            {"timeout_s", r.timeout_s},
            {"ordinal", r.ordinal}};
}

static ExpertRegistration reg_from_json(const json& j) {
    ExpertRegistration r;
    r.expert_id = j.at("expert_id").get<std::string>();
    r.adapter = adapter_from_json(j.at("adapter"));
    r.desc_text = j.value("desc_text", "");
    r.timeout_s = j.value("timeout_s", 30.0);
    r.ordinal = j.at("ordinal").get<int>();
    return r;
}

void Panel::save(const std::string& path) const {
    json j;
    json experts = json::array();
    for (const auto& r : signal_) experts.push_back(reg_to_json(r));
    j["signal_experts"] = experts;
    if (semantic_) j["semantic_analyzer"] = reg_to_json(*semantic_);
    j["next_ordinal"] = next_ordinal_;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("panel save: cannot write " + path);
    out << j.dump(2) << "\n";
}

Panel Panel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("panel load: cannot open " + path);
    json j = json::parse(in);
    Panel p;
    for (const auto& e : j.at("signal_experts")) p.signal_.push_back(reg_from_json(e));
    if (j.contains("semantic_analyzer")) p.semantic_ = reg_from_json(j.at("semantic_analyzer"));
    p.next_ordinal_ = j.at("next_ordinal").get<int>();
    return p;
}

std::shared_ptr<std::map<std::string, double>> load_replay_scores(const std::string& path,
                                                                  const std::string& expert_id) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_replay_scores: cannot open " + path);
    auto table = std::make_shared<std::map<std::string, double>>();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.at("expert_id").get<std::string>() != expert_id) continue;
        (*table)[j.at("sample_id").get<std::string>()] = j.at("score").get<double>();
    }
    return table;
}

namespace {

double parse_score_reply(const std::string& body, const std::string& expert_id) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ScoreError(ScoreErrorKind::malformed, expert_id, std::string("unparseable reply: ") + e.what());
    }
    if (!j.contains("score") || !j.at("score").is_number())
        throw ScoreError(ScoreErrorKind::malformed, expert_id, "reply has no numeric 'score'");
    const double s = j.at("score").get<double>();
    if (!(s >= 0.0 && s <= 1.0))
        throw ScoreError(ScoreErrorKind::out_of_range, expert_id,
                         "score " + std::to_string(s) + " outside [0,1]");
    return s;
}

double score_http(const HttpAdapter& a, const ExpertRegistration& reg, const Sample& sample) {
    // Split endpoint into host part and path.
    auto pos = a.endpoint.find("://");
    std::string rest = pos == std::string::npos ? a.endpoint : a.endpoint.substr(pos + 3);
    auto slash = rest.find('/');
    std::string host = "http://" + (slash == std::string::npos ? rest : rest.substr(0, slash));
    std::string path = slash == std::string::npos ? "/score" : rest.substr(slash);

    httplib::Client client(host);
    const auto secs = static_cast<time_t>(reg.timeout_s);
    const auto usecs = static_cast<time_t>((reg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);

    json req = {{"sample_id", sample.id}, {"image_locator", sample.image_locator}};
    auto res = client.Post(path, req.dump(), "application/json");
    if (!res) {
        const auto err = httplib::to_string(res.error());
        const auto kind = res.error() == httplib::Error::ConnectionTimeout ||
                                  res.error() == httplib::Error::Read
                              ? ScoreErrorKind::timeout
                              : ScoreErrorKind::unreachable;
        throw ScoreError(kind, reg.expert_id, "request failed: " + err);
    }
    if (res->status != 200)
        throw ScoreError(ScoreErrorKind::malformed, reg.expert_id,
                         "HTTP status " + std::to_string(res->status));
    return parse_score_reply(res->body, reg.expert_id);
}

double score_subprocess(const SubprocessAdapter& a, const ExpertRegistration& reg, const Sample& sample) {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw ScoreError(ScoreErrorKind::unreachable, reg.expert_id, "pipe failed");
    pid_t pid = fork();
    if (pid < 0) throw ScoreError(ScoreErrorKind::unreachable, reg.expert_id, "fork failed");
    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", a.command.c_str(), nullptr);
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);

    json req = {{"sample_id", sample.id}, {"image_locator", sample.image_locator}};
    std::string line = req.dump() + "\n";
    (void)!write(in_pipe[1], line.data(), line.size());
    close(in_pipe[1]);

    std::string reply;
    const int timeout_ms = static_cast<int>(reg.timeout_s * 1000.0);
    char buf[4096];
    bool timed_out = false;
    for (;;) {
        pollfd pfd{out_pipe[0], POLLIN, 0};
        int pr = poll(&pfd, 1, timeout_ms);
        if (pr == 0) {
            timed_out = true;
            break;
        }
        ssize_t n = read(out_pipe[0], buf, sizeof(buf));
        if (n <= 0) break;
        reply.append(buf, static_cast<std::size_t>(n));
        if (reply.find('\n') != std::string::npos) break;
    }
    close(out_pipe[0]);
    if (timed_out) {
        kill(pid, SIGKILL);
        waitpid(pid, nullptr, 0);
        throw ScoreError(ScoreErrorKind::timeout, reg.expert_id, "subprocess timed out");
    }
    int status = 0;
    waitpid(pid, &status, 0);
    auto nl = reply.find('\n');
    if (nl != std::string::npos) reply.resize(nl);
    if (reply.empty())
        throw ScoreError(ScoreErrorKind::unreachable, reg.expert_id, "subprocess produced no output");
    return parse_score_reply(reply, reg.expert_id);
}

double score_replay(const ReplayAdapter& a, const ExpertRegistration& reg, const Sample& sample) {
    auto table = a.scores;
    if (!table) table = load_replay_scores(a.manifest_path, reg.expert_id);
    auto it = table->find(sample.id);
    if (it == table->end())
        throw ScoreError(ScoreErrorKind::unknown_sample, reg.expert_id,
                         "no replay entry for sample '" + sample.id + "'");
    const double s = it->second;
    if (!(s >= 0.0 && s <= 1.0))
        throw ScoreError(ScoreErrorKind::out_of_range, reg.expert_id,
                         "replay score " + std::to_string(s) + " outside [0,1]");
    return s;
}

}  // namespace

double score_sample(const ExpertRegistration& reg, const Sample& sample) {
    if (const auto* h = std::get_if<HttpAdapter>(&reg.adapter)) return score_http(*h, reg, sample);
    if (const auto* s = std::get_if<SubprocessAdapter>(&reg.adapter)) return score_subprocess(*s, reg, sample);
    return score_replay(std::get<ReplayAdapter>(reg.adapter), reg, sample);
}

void remove_expert_artifacts(const std::string& store_dir, const std::string& expert_id) {
    namespace fs = std::filesystem;
    fs::remove(fs::path(store_dir) / ("expert_profile_" + expert_id + ".json"));
    for (Modality m : {Modality::clip, Modality::srm, Modality::cfa}) {
        const auto path = clustering_profile_path(store_dir, m);
        if (!fs::exists(path)) continue;
        auto profile = load_clustering_profile(path);
        bool touched = false;
        for (auto& rel : profile.reliabilities) {
            if (rel.per_expert.erase(expert_id) > 0) touched = true;
            auto it = std::find(rel.ranking.begin(), rel.ranking.end(), expert_id);
            if (it != rel.ranking.end()) {
                rel.ranking.erase(it);
                touched = true;
            }
            if (touched) rel.text = render_reliability_text(rel);
        }
        if (touched) save_clustering_profile(profile, store_dir);
    }
}

}  // namespace agentfox
