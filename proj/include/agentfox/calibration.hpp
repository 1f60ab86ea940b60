#pragma once

#include <span>
#include <string>
#include <vector>

#include "agentfox/core.hpp"

namespace agentfox {

enum class CalMethod : int { temperature = 0, platt = 1, isotonic = 2, histogram = 3, beta = 4, identity = 5 };

std::string to_string(CalMethod m);
CalMethod parse_cal_method(std::string_view s);

// Scores are clipped to [kLogitEps, 1 - kLogitEps] before logit transforms.
inline constexpr double kLogitEps = 1e-6;
inline constexpr int kDefaultEceBins = 15;
inline constexpr int kDefaultHistogramBins = 10;

// Parameter layout by method:
//   temperature: {T}
//   platt:       {a, b}                           sigmoid(a*logit(p) + b)
//   isotonic:    {n, x1..xn, y1..yn}              linear interpolation, clamped
//   histogram:   {B, edge0..edgeB, mean1..meanB}
//   beta:        {a, b, c}                        sigmoid(a*ln p - b*ln(1-p) + c)
//   identity:    {}
struct CalibrationModel {
    CalMethod method{CalMethod::identity};
    std::vector<double> params;
};

struct BinStats {
    std::size_t count = 0;
    double mean_confidence = 0.0;
    double empirical_accuracy = 0.0;
};

struct ReliabilityMetrics {
    double ece = 0.0;
    double brier = 0.0;
    int bin_count = 0;
    std::vector<BinStats> per_bin;
};

struct ExpertProfile {
    std::string expert_id;
    std::string desc_text;
    std::string quality_text;
    CalibrationModel calibration;
    ReliabilityMetrics metrics;
    bool is_template = false;
};

using LabeledScores = std::vector<std::pair<double, Label>>;

struct FitOptions {
    int histogram_bins = kDefaultHistogramBins;
};

// Thrown when a parametric fit gets a single-class (or otherwise
// information-free) training set.
struct DegenerateFitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

CalibrationModel fit_calibrator(CalMethod method, const LabeledScores& train, const FitOptions& opts = {});
double apply_calibration(const CalibrationModel& model, double raw_score);

ReliabilityMetrics expected_calibration_error(std::span<const double> scores, std::span<const Label> labels, int bins);
double brier_score(std::span<const double> scores, std::span<const Label> labels);

// Lowest validation ECE wins; ties break by method enum order.
const CalibrationModel& select_best_calibrator(const std::vector<CalibrationModel>& candidates,
                                               const LabeledScores& val, int bins);

ExpertProfile build_expert_profile(const std::string& expert_id, const std::string& desc_text,
                                   const LabeledScores& train, const LabeledScores& val,
                                   int bins = kDefaultEceBins);

// Store: one JSON document per expert, expert_profile_<id>.json.
void save_expert_profile(const ExpertProfile& p, const std::string& dir);
ExpertProfile load_expert_profile(const std::string& path);
std::string expert_profile_path(const std::string& dir, const std::string& expert_id);

// Weighted least-squares isotonic regression by pool-adjacent-violators.
// Inputs already ordered by score; returns the fitted value per position.
std::vector<double> pava(std::span<const double> y, std::span<const double> w);

}  // namespace agentfox
