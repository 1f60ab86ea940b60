#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace agentfox {

enum class Label : int { real = 0, fake = 1 };

enum class Modality : int { clip = 0, srm = 1, cfa = 2 };

std::string to_string(Modality m);
Modality parse_modality(std::string_view s);

// Default feature dimensions and pinned cluster counts per modality.
// Defaults follow the reference extractors; both are overridable.
struct ModalityRegistry {
    std::map<Modality, int> dims = {{Modality::clip, 768}, {Modality::srm, 34}, {Modality::cfa, 64}};
    std::map<Modality, int> pinned_k = {{Modality::clip, 12}, {Modality::srm, 8}, {Modality::cfa, 10}};
};

struct FeatureVector {
    Modality modality{Modality::clip};
    std::vector<double> values;

    int dim() const { return static_cast<int>(values.size()); }
    bool operator==(const FeatureVector&) const = default;
};

struct Sample {
    std::string id;
    std::string source_dataset;
    Label ground_truth{Label::real};
    std::string content_hash;  // hex SHA-256 of raw bytes
    std::map<Modality, std::string> feature_refs;
    std::string image_locator;
};

struct ScoreRecord {
    std::string expert_id;
    double raw_score = 0.0;
    std::optional<double> calibrated_score;
};

enum class VerdictBasis : int { semantic = 0, signal = 1, arbitration = 2, baseline = 3 };

std::string to_string(VerdictBasis b);
std::string to_string(Label l);
Label parse_label(std::string_view s);

struct Verdict {
    Label label{Label::real};
    double confidence = 0.0;
    VerdictBasis basis{VerdictBasis::baseline};
};

enum class Split : int { train = 0, val = 1, test = 2 };

std::string to_string(Split s);
Split parse_split(std::string_view s);

struct DatasetManifest {
    std::string name;
    Split split{Split::train};
    std::vector<Sample> samples;

    // Throws if sample ids are not unique.
    void validate() const;
};

struct BinaryMetrics {
    double f1 = 0.0;
    double acc = 0.0;
};

// Global tie rule: a score equal to the threshold counts as fake.
inline Label threshold_label(double score, double threshold) {
    return score >= threshold ? Label::fake : Label::real;
}

// F1/accuracy with fake as the positive class. F1 is 0 when P + R = 0.
BinaryMetrics f1_acc(const std::vector<std::pair<Label, Label>>& pred_gt);
BinaryMetrics f1_acc(std::span<const double> scores, std::span<const Label> gts, double threshold);

// Hex-encoded SHA-256 of the input bytes.
std::string hash_content(std::string_view bytes);
std::string hash_file(const std::string& path);

// Line-delimited JSON manifest IO, one Sample per line.
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Feature sidecars: line-delimited {id, modality, values:[...]}.
using FeatureTable = std::map<std::pair<std::string, Modality>, FeatureVector>;
void save_features(const FeatureTable& table, const std::string& path);
FeatureTable load_features(const std::string& path);

}  // namespace agentfox
