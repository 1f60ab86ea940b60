#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agentfox/core.hpp"

namespace agentfox {

// Binary error pattern of the signal panel plus ground truth (one
// disagreement cell). Bit 0 of the cell index is the ground truth; bit k
// is expert k's error flag.
struct ConflictVector {
    std::vector<int> errors;  // 1 = expert misclassifies
    int gt = 0;

    int cell_index() const;
    static ConflictVector unpack(int cell_index, int expert_count);
};

ConflictVector conflict_vector(const std::vector<double>& calibrated_scores, Label gt, double threshold);

// N_target = 2^(j+1) * d * n; throws on overflow.
std::uint64_t target_size(int j, int d, int n);

struct StratPlan {
    int j = 4;   // expert count
    int d = 7;   // dataset count
    int n = 15;  // samples per (cell, dataset)
    double threshold = 0.5;
};

struct FillAction {
    int cell = 0;
    std::string from_dataset;
    int count = 0;
};

struct BenchmarkEntry {
    std::string sample_id;
    std::string source_dataset;
    int cell_index = 0;
};

struct BenchmarkManifest {
    StratPlan plan;
    std::uint64_t seed = 0;
    std::vector<BenchmarkEntry> entries;
    std::uint64_t realized_count = 0;
    std::uint64_t target_count = 0;
    std::vector<FillAction> fill_log;

    double coverage() const {
        return target_count == 0 ? 0.0 : static_cast<double>(realized_count) / static_cast<double>(target_count);
    }
    // One-decimal percent, e.g. "94.5%".
    std::string coverage_percent() const;
};

BenchmarkManifest stratified_sample(const std::vector<std::pair<Sample, ConflictVector>>& pool,
                                    const StratPlan& plan, std::uint64_t seed);

std::pair<DatasetManifest, DatasetManifest> profile_split(
    const std::vector<std::pair<Sample, ConflictVector>>& pool, int per_cell, double train_fraction,
    std::uint64_t seed);

void save_benchmark_manifest(const BenchmarkManifest& m, const std::string& path);
BenchmarkManifest load_benchmark_manifest(const std::string& path);

}  // namespace agentfox
