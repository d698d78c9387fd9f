#pragma once

#include "cbpkf/filter_runner.hpp"
#include "cbpkf/system_sim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cbpkf {

inline constexpr std::int64_t kDefaultBurnIn = 100;

/// Which tail a conditioning threshold selects.
enum class TailMode {
    kUpper,     ///< truth > t (for m > 1: ‖truth‖ > t)
    kAbsolute,  ///< |truth| > t (for m > 1 identical to kUpper)
};

/// Paired output of KF and one other method on the same trajectory, with
/// the burn-in already removed. Matrices are (n_cycles − burn_in) x m.
struct RunReport {
    int case_id = 0;
    std::string method_id;
    std::uint64_t seed = 0;
    Eigen::MatrixXd truth;
    Eigen::MatrixXd kf_est;
    Eigen::MatrixXd method_est;
    Eigen::MatrixXd kf_var;
    Eigen::MatrixXd method_var;
    std::vector<double> alpha_trace;
    double kf_seconds = 0.0;
    double method_seconds = 0.0;
};

RunReport make_run_report(const CaseParams& c, const Trajectory& traj, const FilterRun& kf, const FilterRun& method,
                          const std::string& method_id, std::int64_t burn_in = kDefaultBurnIn);

/// N x m matrix of the true states.
Eigen::MatrixXd truth_matrix(const Trajectory& traj);

/// Scalar conditioning variable per step: x (m = 1, upper), |x| (m = 1,
/// absolute) or ‖x‖ (m > 1).
Eigen::VectorXd conditioning_values(const Eigen::MatrixXd& truth, TailMode mode = TailMode::kUpper);

/// `count` evenly spaced thresholds from 0 to the `top_percentile`-th
/// percentile of the conditioning values (100 gives the literal maximum).
std::vector<double> make_thresholds(const Eigen::MatrixXd& truth, int count = 21, double top_percentile = 99.9,
                                    TailMode mode = TailMode::kUpper);

struct ConditionalRmse {
    double threshold = 0.0;
    std::optional<double> rmse;  ///< empty when no step exceeds the threshold
    std::int64_t count = 0;
};

/// RMSE over the steps whose conditioning value exceeds each threshold.
/// Thresholds must be ascending and start at 0. The squared error of a step
/// is ‖est − truth‖² / m.
std::vector<ConditionalRmse> conditional_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est,
                                              const std::vector<double>& thresholds,
                                              TailMode mode = TailMode::kUpper);

double unconditional_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);
/// RMSE against the trajectory truth, skipping the first `burn_in` steps.
double unconditional_rmse(const Trajectory& traj, const Eigen::MatrixXd& est, std::int64_t burn_in);

/// 100 (ref − method) / ref; empty when ref is 0 or either input is missing.
std::optional<double> percent_reduction(std::optional<double> rmse_ref, std::optional<double> rmse_method);

struct TailReduction {
    double threshold = 0.0;
    std::int64_t count = 0;
    double rmse_kf = 0.0;
    double rmse_method = 0.0;
    double percent = 0.0;
};

/// Percent reduction at the highest threshold with at least `min_count`
/// conditioning samples. Empty if no threshold qualifies.
std::optional<TailReduction> tail_reduction(const std::vector<ConditionalRmse>& kf,
                                            const std::vector<ConditionalRmse>& method,
                                            std::int64_t min_count = 50);

struct CalibrationBin {
    double mean_var = 0.0;
    double mean_sq_error = 0.0;
    std::int64_t count = 0;
};

/// Sorts steps by filtered variance and splits them into `n_bins`
/// equal-population bins; a bin boundary never separates equal variances, so
/// ties collapse bins (a constant variance yields one bin) and fewer samples
/// than bins yields at most one bin per sample. Per step the variance is the
/// mean of the diagonal and the squared error is ‖est − truth‖² / m.
std::vector<CalibrationBin> variance_calibration(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth,
                                                 const Eigen::MatrixXd& var, int n_bins);

struct CalibrationFit {
    double slope = 0.0;       ///< least-squares slope with intercept
    double intercept = 0.0;
    double slope_origin = 0.0;  ///< least-squares slope through the origin
};

/// Count-weighted regression of bin mean squared error on bin mean variance.
CalibrationFit calibration_fit(const std::vector<CalibrationBin>& bins);

struct TimingRow {
    std::string method_id;
    double seconds = 0.0;
    double normalized = 0.0;  ///< seconds / KF seconds
};

/// Runs every method on the same trajectory: one untimed warm-up pass, then
/// `repeats` timed passes whose minimum is reported. The first method must be
/// the KF; it defines the normalization.
std::vector<TimingRow> timing_comparison(const Trajectory& traj, const StateEstimate& initial,
                                         const std::vector<MethodSpec>& methods, int repeats = 3);

/// CSV writers; every file starts with a header line.
void write_conditional_rmse_csv(const std::string& path, const std::vector<ConditionalRmse>& kf,
                                const std::vector<ConditionalRmse>& method);
void write_variance_calibration_csv(const std::string& path, const std::vector<CalibrationBin>& bins);
void write_scatter_csv(const std::string& path, const RunReport& report);
void write_timing_csv(const std::string& path, int m, int n, const std::vector<TimingRow>& rows, bool append);

}  // namespace cbpkf
