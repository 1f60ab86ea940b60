#include "agentfox/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"

namespace agentfox {

using nlohmann::json;

std::string to_string(CalMethod m) {
    switch (m) {
        case CalMethod::temperature: return "temperature";
        case CalMethod::platt: return "platt";
        case CalMethod::isotonic: return "isotonic";
        case CalMethod::histogram: return "histogram";
        case CalMethod::beta: return "beta";
        case CalMethod::identity: return "identity";
    }
    throw std::invalid_argument("bad method");
}

CalMethod parse_cal_method(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(CalMethod::identity); ++i)
        if (to_string(static_cast<CalMethod>(i)) == s) return static_cast<CalMethod>(i);
    throw std::invalid_argument("unknown calibration method: " + std::string(s));
}

namespace {

double clip01(double p) { return std::clamp(p, kLogitEps, 1.0 - kLogitEps); }
double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_two_classes(const LabeledScores& train, const char* method) {
    bool pos = false, neg = false;
    for (const auto& [s, y] : train) (y == Label::fake ? pos : neg) = true;
    if (!pos || !neg)
        throw DegenerateFitError(std::string(method) + ": training set contains a single class");
}

double positive_rate(const LabeledScores& train) {
    std::size_t pos = 0;
    for (const auto& [s, y] : train)
        if (y == Label::fake) ++pos;
    return static_cast<double>(pos) / static_cast<double>(train.size());
}

double nll_temperature(const LabeledScores& train, double t) {
    double nll = 0.0;
    for (const auto& [s, y] : train) {
        double q = clip01(sigmoid(logit(clip01(s)) / t));
        nll -= (y == Label::fake) ? std::log(q) : std::log(1.0 - q);
    }
    return nll;
}

CalibrationModel fit_temperature(const LabeledScores& train) {
    check_two_classes(train, "temperature");
    // Golden-section search on [0.05, 20] to 1e-4.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.05, hi = 20.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = nll_temperature(train, x1), f2 = nll_temperature(train, x2);
    while (hi - lo > 1e-4) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = nll_temperature(train, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = nll_temperature(train, x2);
        }
    }
    return {CalMethod::temperature, {(lo + hi) / 2.0}};
}

// Damped Newton for logistic NLL over coefficients w on feature rows u.
// Optionally projects the first `nonneg` coefficients onto [0, inf).
std::vector<double> logistic_newton(const std::vector<std::vector<double>>& u, const std::vector<int>& y,
                                    std::vector<double> w, int nonneg) {
    const std::size_t n = u.size();
    const std::size_t k = w.size();
    auto nll_of = [&](const std::vector<double>& wv) {
        double nll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < k; ++j) z += wv[j] * u[i][j];
            double q = clip01(sigmoid(z));
            nll -= y[i] ? std::log(q) : std::log(1.0 - q);
        }
        return nll;
    };
    double nll = nll_of(w);
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<double> grad(k, 0.0);
        std::vector<std::vector<double>> hess(k, std::vector<double>(k, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            double z = 0.0;
            for (std::size_t j = 0; j < k; ++j) z += w[j] * u[i][j];
            double q = sigmoid(z);
            double r = q - y[i];
            double s = std::max(q * (1.0 - q), 1e-12);
            for (std::size_t j = 0; j < k; ++j) {
                grad[j] += r * u[i][j];
                for (std::size_t l = 0; l < k; ++l) hess[j][l] += s * u[i][j] * u[i][l];
            }
        }
        double gnorm = 0.0;
        for (double g : grad) gnorm += g * g;
        if (std::sqrt(gnorm) < 1e-8) break;
        for (std::size_t j = 0; j < k; ++j) hess[j][j] += 1e-9;
        // Solve hess * step = grad by Gaussian elimination.
        std::vector<double> step = grad;
        auto a = hess;
        for (std::size_t col = 0; col < k; ++col) {
            std::size_t piv = col;
            for (std::size_t r2 = col + 1; r2 < k; ++r2)
                if (std::fabs(a[r2][col]) > std::fabs(a[piv][col])) piv = r2;
            std::swap(a[col], a[piv]);
            std::swap(step[col], step[piv]);
            for (std::size_t r2 = col + 1; r2 < k; ++r2) {
                double f = a[r2][col] / a[col][col];
                for (std::size_t c2 = col; c2 < k; ++c2) a[r2][c2] -= f * a[col][c2];
                step[r2] -= f * step[col];
            }
        }
        for (std::size_t col = k; col-- > 0;) {
            for (std::size_t c2 = col + 1; c2 < k; ++c2) step[col] -= a[col][c2] * step[c2];
            step[col] /= a[col][col];
        }
        double damp = 1.0;
        bool moved = false;
        for (int half = 0; half < 30; ++half) {
            std::vector<double> cand = w;
            for (std::size_t j = 0; j < k; ++j) cand[j] -= damp * step[j];
            for (int j = 0; j < nonneg; ++j) cand[j] = std::max(cand[j], 0.0);
            double cand_nll = nll_of(cand);
            if (cand_nll <= nll) {
                w = std::move(cand);
                nll = cand_nll;
                moved = true;
                break;
            }
            damp *= 0.5;
        }
        if (!moved) break;
    }
    return w;
}

CalibrationModel fit_platt(const LabeledScores& train) {
    check_two_classes(train, "platt");
    std::vector<std::vector<double>> u;
    std::vector<int> y;
    for (const auto& [s, lab] : train) {
        u.push_back({logit(clip01(s)), 1.0});
        y.push_back(lab == Label::fake ? 1 : 0);
    }
    auto w = logistic_newton(u, y, {1.0, 0.0}, 0);
    return {CalMethod::platt, {w[0], w[1]}};
}

CalibrationModel fit_beta(const LabeledScores& train) {
    check_two_classes(train, "beta");
    std::vector<std::vector<double>> u;
    std::vector<int> y;
    for (const auto& [s, lab] : train) {
        double p = clip01(s);
        u.push_back({std::log(p), -std::log(1.0 - p), 1.0});
        y.push_back(lab == Label::fake ? 1 : 0);
    }
    auto w = logistic_newton(u, y, {1.0, 1.0, 0.0}, 2);
    return {CalMethod::beta, {w[0], w[1], w[2]}};
}

CalibrationModel constant_model(double rate) {
    return {CalMethod::histogram, {1.0, 0.0, 1.0, rate}};
}

CalibrationModel fit_isotonic(const LabeledScores& train) {
    bool pos = false, neg = false;
    for (const auto& [s, y] : train) (y == Label::fake ? pos : neg) = true;
    if (!pos || !neg) return constant_model(positive_rate(train));

    // Aggregate ties in score so equal inputs get equal fitted values.
    std::map<double, std::pair<double, double>> agg;  // score -> (sum_y, count)
    for (const auto& [s, y] : train) {
        auto& slot = agg[s];
        slot.first += (y == Label::fake) ? 1.0 : 0.0;
        slot.second += 1.0;
    }
    std::vector<double> xs, ys, ws;
    for (const auto& [x, sy] : agg) {
        xs.push_back(x);
        ys.push_back(sy.first / sy.second);
        ws.push_back(sy.second);
    }
    auto fitted = pava(ys, ws);
    CalibrationModel m{CalMethod::isotonic, {}};
    m.params.push_back(static_cast<double>(xs.size()));
    m.params.insert(m.params.end(), xs.begin(), xs.end());
    m.params.insert(m.params.end(), fitted.begin(), fitted.end());
    return m;
}

CalibrationModel fit_histogram(const LabeledScores& train, int bins) {
    bool pos = false, neg = false;
    for (const auto& [s, y] : train) (y == Label::fake ? pos : neg) = true;
    if (!pos || !neg) return constant_model(positive_rate(train));

    std::vector<double> sum(bins, 0.0), cnt(bins, 0.0);
    for (const auto& [s, y] : train) {
        int b = std::min(static_cast<int>(s * bins), bins - 1);
        sum[b] += (y == Label::fake) ? 1.0 : 0.0;
        cnt[b] += 1.0;
    }
    std::vector<double> means(bins, -1.0);
    for (int b = 0; b < bins; ++b)
        if (cnt[b] > 0) means[b] = sum[b] / cnt[b];
    // Empty bin inherits the nearest non-empty bin's value; ties pick the lower.
    for (int b = 0; b < bins; ++b) {
        if (means[b] >= 0) continue;
        int best = -1, best_dist = bins + 1;
        for (int o = 0; o < bins; ++o)
            if (cnt[o] > 0 && std::abs(o - b) < best_dist) {
                best = o;
                best_dist = std::abs(o - b);
            }
        means[b] = means[best];
    }
    CalibrationModel m{CalMethod::histogram, {}};
    m.params.push_back(static_cast<double>(bins));
    for (int b = 0; b <= bins; ++b) m.params.push_back(static_cast<double>(b) / bins);
    m.params.insert(m.params.end(), means.begin(), means.end());
    return m;
}

}  // namespace

std::vector<double> pava(std::span<const double> y, std::span<const double> w) {
    if (y.size() != w.size()) throw std::invalid_argument("pava: length mismatch");
    struct Block {
        double mean, weight;
        std::size_t size;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean >= blocks.back().mean) {
            Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            double tw = a.weight + b.weight;
            a.mean = (a.mean * a.weight + b.mean * b.weight) / tw;
            a.weight = tw;
            a.size += b.size;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks)
        for (std::size_t i = 0; i < b.size; ++i) out.push_back(b.mean);
    return out;
}

CalibrationModel fit_calibrator(CalMethod method, const LabeledScores& train, const FitOptions& opts) {
    if (train.empty()) throw std::invalid_argument("fit_calibrator: empty training set");
    for (const auto& [s, y] : train)
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("fit_calibrator: score out of [0,1]");
    switch (method) {
        case CalMethod::temperature: return fit_temperature(train);
        case CalMethod::platt: return fit_platt(train);
        case CalMethod::isotonic: return fit_isotonic(train);
        case CalMethod::histogram: return fit_histogram(train, opts.histogram_bins);
        case CalMethod::beta: return fit_beta(train);
        case CalMethod::identity: return {CalMethod::identity, {}};
    }
    throw std::invalid_argument("bad method");
}

double apply_calibration(const CalibrationModel& model, double raw_score) {
    if (!(raw_score >= 0.0 && raw_score <= 1.0))
        throw std::invalid_argument("apply_calibration: score out of [0,1]");
    switch (model.method) {
        case CalMethod::identity: return raw_score;
        case CalMethod::temperature:
            return sigmoid(logit(clip01(raw_score)) / model.params[0]);
        case CalMethod::platt:
            return sigmoid(model.params[0] * logit(clip01(raw_score)) + model.params[1]);
        case CalMethod::beta: {
            double p = clip01(raw_score);
            return sigmoid(model.params[0] * std::log(p) - model.params[1] * std::log(1.0 - p) + model.params[2]);
        }
        case CalMethod::isotonic: {
            const auto n = static_cast<std::size_t>(model.params[0]);
            const double* xs = model.params.data() + 1;
            const double* ys = xs + n;
            if (raw_score <= xs[0]) return ys[0];
            if (raw_score >= xs[n - 1]) return ys[n - 1];
            std::size_t hi = std::upper_bound(xs, xs + n, raw_score) - xs;
            std::size_t lo = hi - 1;
            double t = (raw_score - xs[lo]) / (xs[hi] - xs[lo]);
            return ys[lo] + t * (ys[hi] - ys[lo]);
        }
        case CalMethod::histogram: {
            const auto bins = static_cast<int>(model.params[0]);
            const double* means = model.params.data() + 1 + bins + 1;
            int b = std::min(static_cast<int>(raw_score * bins), bins - 1);
            return means[b];
        }
    }
    throw std::invalid_argument("bad method");
}

ReliabilityMetrics expected_calibration_error(std::span<const double> scores, std::span<const Label> labels,
                                              int bins) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("expected_calibration_error: length mismatch");
    if (scores.empty()) throw std::invalid_argument("expected_calibration_error: empty input");
    if (bins < 1) throw std::invalid_argument("expected_calibration_error: bins must be >= 1");

    ReliabilityMetrics m;
    m.bin_count = bins;
    m.per_bin.assign(bins, {});
    std::vector<double> conf_sum(bins, 0.0), pos_sum(bins, 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        int b = std::min(static_cast<int>(scores[i] * bins), bins - 1);
        ++m.per_bin[b].count;
        conf_sum[b] += scores[i];
        pos_sum[b] += (labels[i] == Label::fake) ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(scores.size());
    double ece = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (m.per_bin[b].count == 0) continue;
        const double c = static_cast<double>(m.per_bin[b].count);
        m.per_bin[b].mean_confidence = conf_sum[b] / c;
        m.per_bin[b].empirical_accuracy = pos_sum[b] / c;
        ece += (c / n) * std::fabs(m.per_bin[b].empirical_accuracy - m.per_bin[b].mean_confidence);
    }
    m.ece = ece;
    m.brier = brier_score(scores, labels);
    return m;
}

double brier_score(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("brier_score: length mismatch");
    if (scores.empty()) throw std::invalid_argument("brier_score: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double d = scores[i] - (labels[i] == Label::fake ? 1.0 : 0.0);
        sum += d * d;
    }
    return sum / static_cast<double>(scores.size());
}

static ReliabilityMetrics eval_model(const CalibrationModel& m, const LabeledScores& val, int bins) {
    std::vector<double> scores;
    std::vector<Label> labels;
    scores.reserve(val.size());
    for (const auto& [s, y] : val) {
        scores.push_back(apply_calibration(m, s));
        labels.push_back(y);
    }
    return expected_calibration_error(scores, labels, bins);
}

const CalibrationModel& select_best_calibrator(const std::vector<CalibrationModel>& candidates,
                                               const LabeledScores& val, int bins) {
    if (candidates.empty()) throw std::invalid_argument("select_best_calibrator: no candidates");
    if (val.empty()) throw std::invalid_argument("select_best_calibrator: empty validation set");
    std::size_t best = 0;
    double best_ece = eval_model(candidates[0], val, bins).ece;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        double ece = eval_model(candidates[i], val, bins).ece;
        if (ece < best_ece ||
            (ece == best_ece && static_cast<int>(candidates[i].method) < static_cast<int>(candidates[best].method))) {
            best = i;
            best_ece = ece;
        }
    }
    return candidates[best];
}

static std::string render_quality_text(const CalibrationModel& m, const ReliabilityMetrics& r, bool is_template) {
    char buf[160];
    const char* verdict = is_template            ? "template (uncalibrated)"
                          : r.ece < 0.05         ? "well calibrated"
                          : r.ece < 0.15         ? "moderately calibrated"
                                                 : "poorly calibrated";
    std::snprintf(buf, sizeof(buf), "method=%s; ECE=%.4f; Brier=%.4f; verdict=%s", to_string(m.method).c_str(),
                  r.ece, r.brier, verdict);
    return buf;
}

ExpertProfile build_expert_profile(const std::string& expert_id, const std::string& desc_text,
                                   const LabeledScores& train, const LabeledScores& val, int bins) {
    ExpertProfile p;
    p.expert_id = expert_id;
    p.desc_text = desc_text;

    bool pos = false, neg = false, varied = false;
    for (const auto& [s, y] : train) {
        (y == Label::fake ? pos : neg) = true;
        if (s != train.front().first) varied = true;
    }
    const bool degenerate = train.empty() || !pos || !neg || !varied;
    if (degenerate) {
        p.is_template = true;
        p.calibration = {CalMethod::identity, {}};
        if (!val.empty()) p.metrics = eval_model(p.calibration, val, bins);
        p.metrics.bin_count = bins;
        p.quality_text = render_quality_text(p.calibration, p.metrics, true);
        return p;
    }

    std::vector<CalibrationModel> candidates;
    for (CalMethod m : {CalMethod::temperature, CalMethod::platt, CalMethod::isotonic, CalMethod::histogram,
                        CalMethod::beta})
        candidates.push_back(fit_calibrator(m, train));
    // Identity rides along so selection can never make validation ECE worse
    // than the raw scores.
    candidates.push_back({CalMethod::identity, {}});

    p.calibration = select_best_calibrator(candidates, val, bins);
    p.metrics = eval_model(p.calibration, val, bins);
    p.quality_text = render_quality_text(p.calibration, p.metrics, false);
    return p;
}

static json metrics_to_json(const ReliabilityMetrics& m) {
    json j;
    j["ece"] = m.ece;
    j["brier"] = m.brier;
    j["bin_count"] = m.bin_count;
    json bins = json::array();
    for (const auto& b : m.per_bin)
        bins.push_back({{"count", b.count}, {"mean_confidence", b.mean_confidence},
                        {"empirical_accuracy", b.empirical_accuracy}});
    j["per_bin"] = bins;
    return j;
}

static ReliabilityMetrics metrics_from_json(const json& j) {
    ReliabilityMetrics m;
    m.ece = j.at("ece").get<double>();
    m.brier = j.at("brier").get<double>();
    m.bin_count = j.at("bin_count").get<int>();
    for (const auto& b : j.at("per_bin"))
        m.per_bin.push_back({b.at("count").get<std::size_t>(), b.at("mean_confidence").get<double>(),
                             b.at("empirical_accuracy").get<double>()});
    return m;
}

std::string expert_profile_path(const std::string& dir, const std::string& expert_id) {
    return dir + "/expert_profile_" + expert_id + ".json";
}

void save_expert_profile(const ExpertProfile& p, const std::string& dir) {
    json j;
    j["expert_id"] = p.expert_id;
    j["desc_text"] = p.desc_text;
    j["quality_text"] = p.quality_text;
    j["is_template"] = p.is_template;
    j["calibration"] = {{"method", to_string(p.calibration.method)}, {"params", p.calibration.params}};
    j["metrics"] = metrics_to_json(p.metrics);
    std::ofstream out(expert_profile_path(dir, p.expert_id));
    if (!out) throw std::runtime_error("save_expert_profile: cannot write to " + dir);
    out << j.dump(2) << "\n";
}

ExpertProfile load_expert_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_expert_profile: cannot open " + path);
    json j = json::parse(in);
    ExpertProfile p;
    p.expert_id = j.at("expert_id").get<std::string>();
    p.desc_text = j.at("desc_text").get<std::string>();
    p.quality_text = j.at("quality_text").get<std::string>();
    p.is_template = j.at("is_template").get<bool>();
    p.calibration.method = parse_cal_method(j.at("calibration").at("method").get<std::string>());
    p.calibration.params = j.at("calibration").at("params").get<std::vector<double>>();
    p.metrics = metrics_from_json(j.at("metrics"));
    return p;
}

}  // namespace agentfox
