#include "agentfox/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "agentfox/rng.hpp"
#include "json.hpp"

namespace agentfox {

using nlohmann::json;

int ConflictVector::cell_index() const {
    int idx = gt & 1;
    for (std::size_t k = 0; k < errors.size(); ++k) idx |= (errors[k] & 1) << (k + 1);
    return idx;
}

ConflictVector ConflictVector::unpack(int cell_index, int expert_count) {
    ConflictVector v;
    v.gt = cell_index & 1;
    v.errors.resize(expert_count);
    for (int k = 0; k < expert_count; ++k) v.errors[k] = (cell_index >> (k + 1)) & 1;
    return v;
}

ConflictVector conflict_vector(const std::vector<double>& calibrated_scores, Label gt, double threshold) {
    ConflictVector v;
    v.gt = static_cast<int>(gt);
    v.errors.reserve(calibrated_scores.size());
    for (double s : calibrated_scores)
        v.errors.push_back(threshold_label(s, threshold) != gt ? 1 : 0);
    return v;
}

std::uint64_t target_size(int j, int d, int n) {
    if (j < 0 || d < 1 || n < 1) throw std::invalid_argument("target_size: arguments must be positive");
    if (j + 1 >= 63) throw std::overflow_error("target_size: 2^(j+1) overflows");
    const std::uint64_t cells = 1ULL << (j + 1);
    const std::uint64_t dn = static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(n);
    if (dn != 0 && cells > UINT64_MAX / dn) throw std::overflow_error("target_size: product overflows");
    return cells * dn;
}

std::string BenchmarkManifest::coverage_percent() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", coverage() * 100.0);
    return buf;
}

BenchmarkManifest stratified_sample(const std::vector<std::pair<Sample, ConflictVector>>& pool,
                                    const StratPlan& plan, std::uint64_t seed) {
    if (pool.empty()) throw std::invalid_argument("stratified_sample: empty pool");
    const int cells = 1 << (plan.j + 1);

    // Dedup by content hash, first occurrence wins.
    std::set<std::string> seen;
    std::vector<const std::pair<Sample, ConflictVector>*> deduped;
    for (const auto& entry : pool) {
        if (!entry.first.content_hash.empty() && !seen.insert(entry.first.content_hash).second) continue;
        if (static_cast<int>(entry.second.errors.size()) != plan.j)
            throw std::invalid_argument("stratified_sample: conflict vector length does not match plan");
        deduped.push_back(&entry);
    }

    std::set<std::string> dataset_set;
    for (const auto* e : deduped) dataset_set.insert(e->first.source_dataset);
    std::vector<std::string> datasets(dataset_set.begin(), dataset_set.end());

    std::map<std::pair<int, std::string>, std::vector<const std::pair<Sample, ConflictVector>*>> buckets;
    for (const auto* e : deduped) buckets[{e->second.cell_index(), e->first.source_dataset}].push_back(e);

    Rng rng(seed);
    BenchmarkManifest out;
    out.plan = plan;
    out.seed = seed;
    out.target_count = target_size(plan.j, plan.d, plan.n);

    for (int cell = 0; cell < cells; ++cell) {
        std::vector<BenchmarkEntry> cell_entries;
        std::map<std::string, std::vector<const std::pair<Sample, ConflictVector>*>> remainders;
        std::size_t drawn_total = 0;

        for (const auto& ds : datasets) {
            auto it = buckets.find({cell, ds});
            if (it == buckets.end()) continue;
            auto avail = it->second;
            rng.shuffle(avail);
            const std::size_t take = std::min<std::size_t>(plan.n, avail.size());
            for (std::size_t i = 0; i < take; ++i)
                cell_entries.push_back({avail[i]->first.id, ds, cell});
            drawn_total += take;
            if (take < avail.size())
                remainders[ds].assign(avail.begin() + take, avail.end());
        }

        const std::size_t cell_target = static_cast<std::size_t>(plan.d) * static_cast<std::size_t>(plan.n);
        std::size_t deficit = cell_target > drawn_total ? cell_target - drawn_total : 0;
        std::size_t remaining_total = 0;
        for (const auto& [ds, rem] : remainders) remaining_total += rem.size();
        const std::size_t fill_total = std::min(deficit, remaining_total);

        if (fill_total > 0) {
            // Largest-remainder apportionment across donors by remaining count.
            struct Quota {
                std::string ds;
                std::size_t cap;
                std::size_t take;
                double frac;
            };
            std::vector<Quota> quotas;
            std::size_t assigned = 0;
            for (const auto& [ds, rem] : remainders) {
                double exact = static_cast<double>(fill_total) * static_cast<double>(rem.size()) /
                               static_cast<double>(remaining_total);
                std::size_t base = static_cast<std::size_t>(std::floor(exact));
                quotas.push_back({ds, rem.size(), base, exact - std::floor(exact)});
                assigned += base;
            }
            std::size_t leftover = fill_total - assigned;
            std::vector<std::size_t> order(quotas.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                if (quotas[a].frac != quotas[b].frac) return quotas[a].frac > quotas[b].frac;
                return quotas[a].ds < quotas[b].ds;
            });
            for (std::size_t i = 0; leftover > 0; i = (i + 1) % order.size()) {
                auto& q = quotas[order[i]];
                if (q.take < q.cap) {
                    ++q.take;
                    --leftover;
                }
            }
            for (const auto& q : quotas) {
                if (q.take == 0) continue;
                const auto& rem = remainders.at(q.ds);
                for (std::size_t i = 0; i < q.take; ++i)
                    cell_entries.push_back({rem[i]->first.id, q.ds, cell});
                out.fill_log.push_back({cell, q.ds, static_cast<int>(q.take)});
            }
        }

        out.entries.insert(out.entries.end(), cell_entries.begin(), cell_entries.end());
    }

    out.realized_count = out.entries.size();
    return out;
}

std::pair<DatasetManifest, DatasetManifest> profile_split(
    const std::vector<std::pair<Sample, ConflictVector>>& pool, int per_cell, double train_fraction,
    std::uint64_t seed) {
    if (per_cell < 1) throw std::invalid_argument("profile_split: per_cell must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("profile_split: fraction must lie in (0,1)");

    std::map<int, std::vector<const std::pair<Sample, ConflictVector>*>> by_cell;
    for (const auto& e : pool) by_cell[e.second.cell_index()].push_back(&e);

    Rng rng(seed);
    DatasetManifest train{"profile_train", Split::train, {}};
    DatasetManifest val{"profile_val", Split::val, {}};
    for (auto& [cell, members] : by_cell) {
        rng.shuffle(members);
        const std::size_t take = std::min<std::size_t>(per_cell, members.size());
        std::size_t n_train;
        if (take == 1) {
            n_train = 1;  // singles go to train
        } else {
            n_train = static_cast<std::size_t>(std::floor(static_cast<double>(take) * train_fraction));
            n_train = std::clamp<std::size_t>(n_train, 1, take - 1);
        }
        for (std::size_t i = 0; i < take; ++i)
            (i < n_train ? train : val).samples.push_back(members[i]->first);
    }
    return {train, val};
}

static json plan_to_json(const StratPlan& p) {
    return {{"j", p.j}, {"d", p.d}, {"n", p.n}, {"threshold", p.threshold}};
}

void save_benchmark_manifest(const BenchmarkManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_benchmark_manifest: cannot write " + path);
    json header;
    header["plan"] = plan_to_json(m.plan);
    header["seed"] = m.seed;
    header["target_count"] = m.target_count;
    header["realized_count"] = m.realized_count;
    header["coverage"] = m.coverage();
    json fills = json::array();
    for (const auto& f : m.fill_log)
        fills.push_back({{"cell", f.cell}, {"from_dataset", f.from_dataset}, {"count", f.count}});
    header["fill_log"] = fills;
    out << header.dump() << "\n";
    for (const auto& e : m.entries) {
        json j = {{"sample_id", e.sample_id}, {"source_dataset", e.source_dataset}, {"cell_index", e.cell_index}};
        out << j.dump() << "\n";
    }
}

BenchmarkManifest load_benchmark_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_benchmark_manifest: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_benchmark_manifest: empty file");
    json header = json::parse(line);
    BenchmarkManifest m;
    m.plan.j = header.at("plan").at("j").get<int>();
    m.plan.d = header.at("plan").at("d").get<int>();
    m.plan.n = header.at("plan").at("n").get<int>();
    m.plan.threshold = header.at("plan").at("threshold").get<double>();
    m.seed = header.at("seed").get<std::uint64_t>();
    m.target_count = header.at("target_count").get<std::uint64_t>();
    m.realized_count = header.at("realized_count").get<std::uint64_t>();
    for (const auto& f : header.at("fill_log"))
        m.fill_log.push_back({f.at("cell").get<int>(), f.at("from_dataset").get<std::string>(),
                              f.at("count").get<int>()});
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        m.entries.push_back({j.at("sample_id").get<std::string>(), j.at("source_dataset").get<std::string>(),
                             j.at("cell_index").get<int>()});
    }
    return m;
}

}  // namespace agentfox
