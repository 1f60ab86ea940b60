#include "agentfox/core.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <openssl/sha.h>

#include "json.hpp"

namespace agentfox {

using nlohmann::json;

std::string to_string(Modality m) {
    switch (m) {
        case Modality::clip: return "clip";
        case Modality::srm: return "srm";
        case Modality::cfa: return "cfa";
    }
    throw std::invalid_argument("bad modality");
}

Modality parse_modality(std::string_view s) {
    if (s == "clip") return Modality::clip;
    if (s == "srm") return Modality::srm;
    if (s == "cfa") return Modality::cfa;
    throw std::invalid_argument("unknown modality: " + std::string(s));
}

std::string to_string(VerdictBasis b) {
    switch (b) {
        case VerdictBasis::semantic: return "semantic";
        case VerdictBasis::signal: return "signal";
        case VerdictBasis::arbitration: return "arbitration";
        case VerdictBasis::baseline: return "baseline";
    }
    throw std::invalid_argument("bad basis");
}

std::string to_string(Label l) { return l == Label::fake ? "fake" : "real"; }

Label parse_label(std::string_view s) {
    if (s == "fake") return Label::fake;
    if (s == "real") return Label::real;
    throw std::invalid_argument("unknown label: " + std::string(s));
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    throw std::invalid_argument("bad split");
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split: " + std::string(s));
}

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    for (const auto& s : samples) {
        if (!ids.insert(s.id).second)
            throw std::invalid_argument("duplicate sample id in manifest '" + name + "': " + s.id);
    }
}

BinaryMetrics f1_acc(const std::vector<std::pair<Label, Label>>& pred_gt) {
    if (pred_gt.empty()) throw std::invalid_argument("f1_acc: empty prediction list");
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (const auto& [pred, gt] : pred_gt) {
        if (pred == gt) ++correct;
        if (pred == Label::fake && gt == Label::fake) ++tp;
        if (pred == Label::fake && gt == Label::real) ++fp;
        if (pred == Label::real && gt == Label::fake) ++fn;
    }
    BinaryMetrics m;
    m.acc = static_cast<double>(correct) / static_cast<double>(pred_gt.size());
    const double denom = static_cast<double>(2 * tp + fp + fn);
    m.f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
    return m;
}

BinaryMetrics f1_acc(std::span<const double> scores, std::span<const Label> gts, double threshold) {
    if (scores.size() != gts.size()) throw std::invalid_argument("f1_acc: length mismatch");
    std::vector<std::pair<Label, Label>> pairs;
    pairs.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        pairs.emplace_back(threshold_label(scores[i], threshold), gts[i]);
    return f1_acc(pairs);
}

std::string hash_content(std::string_view bytes) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
    static const char* hex = "0123456789abcdef";
    std::string out(SHA256_DIGEST_LENGTH * 2, '0');
    for (int i = 0; i < SHA256_DIGEST_LENGTH; ++i) {
        out[2 * i] = hex[digest[i] >> 4];
        out[2 * i + 1] = hex[digest[i] & 0xf];
    }
    return out;
}

std::string hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hash_file: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return hash_content(ss.str());
}

static json sample_to_json(const Sample& s) {
    json j;
    j["id"] = s.id;
    j["source_dataset"] = s.source_dataset;
    j["ground_truth"] = static_cast<int>(s.ground_truth);
    j["content_hash"] = s.content_hash;
    if (!s.image_locator.empty()) j["image_locator"] = s.image_locator;
    if (!s.feature_refs.empty()) {
        json refs = json::object();
        for (const auto& [m, loc] : s.feature_refs) refs[to_string(m)] = loc;
        j["feature_refs"] = refs;
    }
    return j;
}

static Sample sample_from_json(const json& j) {
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.source_dataset = j.at("source_dataset").get<std::string>();
    const int gt = j.at("ground_truth").get<int>();
    if (gt != 0 && gt != 1) throw std::invalid_argument("ground_truth must be 0 or 1");
    s.ground_truth = static_cast<Label>(gt);
    s.content_hash = j.value("content_hash", "");
    s.image_locator = j.value("image_locator", "");
    if (j.contains("feature_refs"))
        for (const auto& [k, v] : j.at("feature_refs").items())
            s.feature_refs[parse_modality(k)] = v.get<std::string>();
    return s;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    m.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_manifest: cannot write " + path);
    json header;
    header["manifest"] = m.name;
    header["split"] = to_string(m.split);
    out << header.dump() << "\n";
    for (const auto& s : m.samples) out << sample_to_json(s).dump() << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    DatasetManifest m;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (!header_seen && j.contains("manifest")) {
            m.name = j.at("manifest").get<std::string>();
            m.split = parse_split(j.at("split").get<std::string>());
            header_seen = true;
            continue;
        }
        header_seen = true;
        m.samples.push_back(sample_from_json(j));
    }
    m.validate();
    return m;
}

void save_features(const FeatureTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_features: cannot write " + path);
    for (const auto& [key, fv] : table) {
        json j;
        j["id"] = key.first;
        j["modality"] = to_string(key.second);
        j["values"] = fv.values;
        out << j.dump() << "\n";
    }
}

FeatureTable load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_features: cannot open " + path);
    FeatureTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        FeatureVector fv;
        fv.modality = parse_modality(j.at("modality").get<std::string>());
        fv.values = j.at("values").get<std::vector<double>>();
        table[{j.at("id").get<std::string>(), fv.modality}] = std::move(fv);
    }
    return table;
}

}  // namespace agentfox
