#include "cbpkf/evaluation.hpp"

#include "cbpkf/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace cbpkf {
namespace {

Eigen::VectorXd step_sq_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    if (truth.rows() != est.rows() || truth.cols() != est.cols()) {
        throw ConfigError("evaluation: truth and estimate matrices differ in shape");
    }
    return (est - truth).rowwise().squaredNorm() / static_cast<double>(truth.cols());
}

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    out << std::setprecision(12);
    return out;
}

}  // namespace

Eigen::MatrixXd truth_matrix(const Trajectory& traj) {
    if (traj.truth.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(traj.size()), traj.truth.front().size());
    for (std::size_t k = 0; k < traj.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = traj.truth[k].transpose();
    return out;
}

RunReport make_run_report(const CaseParams& c, const Trajectory& traj, const FilterRun& kf, const FilterRun& method,
                          const std::string& method_id, std::int64_t burn_in) {
    const auto total = static_cast<Eigen::Index>(traj.size());
    if (burn_in < 0 || burn_in >= total) throw ConfigError("make_run_report: burn-in must be shorter than the run");
    const Eigen::Index keep = total - burn_in;
    RunReport r;
    r.case_id = c.case_id;
    r.method_id = method_id;
    r.seed = c.seed;
    r.truth = truth_matrix(traj).bottomRows(keep);
    r.kf_est = kf.estimates.bottomRows(keep);
    r.method_est = method.estimates.bottomRows(keep);
    r.kf_var = kf.variances.bottomRows(keep);
    r.method_var = method.variances.bottomRows(keep);
    r.alpha_trace.assign(method.alpha.begin() + burn_in, method.alpha.end());
    r.kf_seconds = kf.seconds;
    r.method_seconds = method.seconds;
    return r;
}

Eigen::VectorXd conditioning_values(const Eigen::MatrixXd& truth, TailMode mode) {
    if (truth.cols() == 1) {
        return mode == TailMode::kAbsolute ? Eigen::VectorXd(truth.col(0).cwiseAbs()) : Eigen::VectorXd(truth.col(0));
    }
    return truth.rowwise().norm();
}

std::vector<double> make_thresholds(const Eigen::MatrixXd& truth, int count, double top_percentile,
                                    TailMode mode) {
    if (count < 2) throw ConfigError("make_thresholds: need at least two thresholds");
    if (!(top_percentile > 0.0 && top_percentile <= 100.0)) {
        throw ConfigError("make_thresholds: percentile must lie in (0, 100]");
    }
    if (truth.rows() == 0) throw ConfigError("make_thresholds: empty truth");
    Eigen::VectorXd v = conditioning_values(truth, mode);
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end());
    // Linear interpolation between closest ranks.
    const double pos = top_percentile / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double top = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (!(top > 0.0)) throw ConfigError("make_thresholds: upper percentile of truth is not positive");

    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = top * i / (count - 1);
    return out;
}

std::vector<ConditionalRmse> conditional_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est,
                                              const std::vector<double>& thresholds, TailMode mode) {
    if (thresholds.empty() || thresholds.front() != 0.0) {
        throw ConfigError("conditional_rmse: thresholds must start at 0");
    }
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ConfigError("conditional_rmse: thresholds must be ascending");
    }
    const Eigen::VectorXd sq = step_sq_error(truth, est);
    const Eigen::VectorXd v = conditioning_values(truth, mode);

    std::vector<ConditionalRmse> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        double sum = 0.0;
        std::int64_t count = 0;
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (v(k) > t) {
                sum += sq(k);
                ++count;
            }
        }
        ConditionalRmse row;
        row.threshold = t;
        row.count = count;
        if (count > 0) row.rmse = std::sqrt(sum / static_cast<double>(count));
        out.push_back(row);
    }
    return out;
}

double unconditional_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    if (truth.rows() == 0) throw ConfigError("unconditional_rmse: no samples");
    return std::sqrt(step_sq_error(truth, est).mean());
}

double unconditional_rmse(const Trajectory& traj, const Eigen::MatrixXd& est, std::int64_t burn_in) {
    const Eigen::Index keep = static_cast<Eigen::Index>(traj.size()) - burn_in;
    if (burn_in < 0 || keep <= 0) throw ConfigError("unconditional_rmse: burn-in must be shorter than the run");
    return unconditional_rmse(truth_matrix(traj).bottomRows(keep), est.bottomRows(keep));
}

std::optional<double> percent_reduction(std::optional<double> rmse_ref, std::optional<double> rmse_method) {
    if (!rmse_ref || !rmse_method || !(*rmse_ref > 0.0)) return std::nullopt;
    return 100.0 * (*rmse_ref - *rmse_method) / *rmse_ref;
}

std::optional<TailReduction> tail_reduction(const std::vector<ConditionalRmse>& kf,
                                            const std::vector<ConditionalRmse>& method, std::int64_t min_count) {
    if (kf.size() != method.size()) throw ConfigError("tail_reduction: threshold grids differ");
    for (std::size_t i = kf.size(); i-- > 0;) {
        if (kf[i].count < min_count || !kf[i].rmse || !method[i].rmse) continue;
        const auto pct = percent_reduction(kf[i].rmse, method[i].rmse);
        if (!pct) continue;
        TailReduction t;
        t.threshold = kf[i].threshold;
        t.count = kf[i].count;
        t.rmse_kf = *kf[i].rmse;
        t.rmse_method = *method[i].rmse;
        t.percent = *pct;
        return t;
    }
    return std::nullopt;
}

std::vector<CalibrationBin> variance_calibration(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth,
                                                 const Eigen::MatrixXd& var, int n_bins) {
    if (n_bins < 2) throw ConfigError("variance_calibration: n_bins must be >= 2");
    if (var.rows() != truth.rows()) throw ConfigError("variance_calibration: variance length differs");
    const Eigen::VectorXd sq = step_sq_error(truth, est);
    const Eigen::VectorXd v = var.rowwise().mean();
    const auto n = static_cast<std::size_t>(v.size());
    if (n == 0) return {};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) {
        return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b));
    });
    auto value_at = [&](std::size_t rank) { return v(static_cast<Eigen::Index>(order[rank])); };

    std::vector<std::size_t> edges{0};
    const auto bins = static_cast<std::size_t>(n_bins);
    for (std::size_t b = 1; b < bins; ++b) {
        std::size_t e = (b * n + bins / 2) / bins;
        while (e < n && e > 0 && value_at(e) == value_at(e - 1)) ++e;
        if (e > edges.back() && e < n) edges.push_back(e);
    }
    edges.push_back(n);

    std::vector<CalibrationBin> out;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        CalibrationBin bin;
        double sum_v = 0.0;
        double sum_sq = 0.0;
        for (std::size_t r = edges[i]; r < edges[i + 1]; ++r) {
            sum_v += value_at(r);
            sum_sq += sq(static_cast<Eigen::Index>(order[r]));
        }
        bin.count = static_cast<std::int64_t>(edges[i + 1] - edges[i]);
        bin.mean_var = sum_v / static_cast<double>(bin.count);
        bin.mean_sq_error = sum_sq / static_cast<double>(bin.count);
        out.push_back(bin);
    }
    return out;
}

CalibrationFit calibration_fit(const std::vector<CalibrationBin>& bins) {
    if (bins.size() < 2) throw ConfigError("calibration_fit: need at least two bins");
    double w = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& b : bins) {
        const auto c = static_cast<double>(b.count);
        w += c;
        sx += c * b.mean_var;
        sy += c * b.mean_sq_error;
        sxx += c * b.mean_var * b.mean_var;
        sxy += c * b.mean_var * b.mean_sq_error;
    }
    CalibrationFit fit;
    const double mx = sx / w;
    const double my = sy / w;
    const double vxx = sxx / w - mx * mx;
    if (!(vxx > 0.0)) throw ConfigError("calibration_fit: bin variances are all equal");
    fit.slope = (sxy / w - mx * my) / vxx;
    fit.intercept = my - fit.slope * mx;
    fit.slope_origin = sxy / sxx;
    return fit;
}

std::vector<TimingRow> timing_comparison(const Trajectory& traj, const StateEstimate& initial,
                                         const std::vector<MethodSpec>& methods, int repeats) {
    if (methods.empty() || methods.front().kind != MethodKind::kKf) {
        throw ConfigError("timing_comparison: the first method must be the KF");
    }
    if (repeats < 1) throw ConfigError("timing_comparison: repeats must be >= 1");
    std::vector<TimingRow> rows;
    for (const auto& spec : methods) {
        (void)run_filter(traj, spec, initial);  // warm-up
        double best = HUGE_VAL;
        for (int i = 0; i < repeats; ++i) best = std::min(best, run_filter(traj, spec, initial).seconds);
        rows.push_back({spec.id, best, 0.0});
    }
    const double kf = rows.front().seconds;
    for (auto& r : rows) r.normalized = kf > 0.0 ? r.seconds / kf : 0.0;
    return rows;
}

void write_conditional_rmse_csv(const std::string& path, const std::vector<ConditionalRmse>& kf,
                                const std::vector<ConditionalRmse>& method) {
    if (kf.size() != method.size()) throw ConfigError("write_conditional_rmse_csv: grids differ");
    auto out = open_csv(path);
    out << "threshold,count,rmse_kf,rmse_method,percent_reduction\n";
    auto cell = [&out](const std::optional<double>& v) {
        if (v) out << *v; else out << "NA";
    };
    for (std::size_t i = 0; i < kf.size(); ++i) {
        out << kf[i].threshold << ',' << kf[i].count << ',';
        cell(kf[i].rmse);
        out << ',';
        cell(method[i].rmse);
        out << ',';
        cell(percent_reduction(kf[i].rmse, method[i].rmse));
        out << '\n';
    }
}

void write_variance_calibration_csv(const std::string& path, const std::vector<CalibrationBin>& bins) {
    auto out = open_csv(path);
    out << "bin,mean_filtered_var,mean_sq_error,count\n";
    for (std::size_t i = 0; i < bins.size(); ++i) {
        out << i << ',' << bins[i].mean_var << ',' << bins[i].mean_sq_error << ',' << bins[i].count << '\n';
    }
}

void write_scatter_csv(const std::string& path, const RunReport& report) {
    auto out = open_csv(path);
    const Eigen::Index m = report.truth.cols();
    out << "k";
    for (Eigen::Index j = 1; j <= m; ++j) out << ",truth_" << j << ",kf_" << j << ",method_" << j;
    out << ",alpha\n";
    for (Eigen::Index k = 0; k < report.truth.rows(); ++k) {
        out << k;
        for (Eigen::Index j = 0; j < m; ++j) {
            out << ',' << report.truth(k, j) << ',' << report.kf_est(k, j) << ',' << report.method_est(k, j);
        }
        out << ',' << report.alpha_trace[static_cast<std::size_t>(k)] << '\n';
    }
}

void write_timing_csv(const std::string& path, int m, int n, const std::vector<TimingRow>& rows, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    out << std::setprecision(12);
    if (!append) out << "m,n,method,seconds,normalized_time\n";
    for (const auto& r : rows) out << m << ',' << n << ',' << r.method_id << ',' << r.seconds << ',' << r.normalized << '\n';
}

}  // namespace cbpkf
