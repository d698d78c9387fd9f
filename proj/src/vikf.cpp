#include "cbpkf/vikf.hpp"

#include "cbpkf/error.hpp"
#include "cbpkf/evaluation.hpp"
#include "cbpkf/filter_runner.hpp"
#include "cbpkf/kalman.hpp"
#include "cbpkf/linalg.hpp"

#include <cmath>
#include <vector>

namespace cbpkf {

void VikfConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("VikfConfig: alpha must be >= 0");
    if (!(alpha_boost > 0.0)) throw ConfigError("VikfConfig: alpha_boost must be > 0");
    if (!(reduce_factor > 0.0 && reduce_factor < 1.0)) {
        throw ConfigError("VikfConfig: reduce_factor must lie in (0, 1)");
    }
    if (max_iters < 1) throw ConfigError("VikfConfig: max_iters must be >= 1");
    if (psd_tol && !(*psd_tol >= 0.0)) throw ConfigError("VikfConfig: psd_tol must be >= 0");
}

namespace {

struct InflatedUpdate {
    Eigen::MatrixXd gain;
    Eigen::MatrixXd cov;
};

InflatedUpdate inflated_update(const Eigen::MatrixXd& prior_cov, const SystemModel& model, double beta) {
    const Eigen::MatrixXd bsht = beta * prior_cov * model.h.transpose();  // βΣHᵀ
    const Eigen::MatrixXd innovation = linalg::symmetrize(model.h * bsht + model.r);
    const auto llt = linalg::factor_spd(innovation, "vikf: inflated innovation covariance");
    InflatedUpdate out;
    out.gain = llt.solve(bsht.transpose()).transpose();
    out.cov = linalg::symmetrize(beta * prior_cov - out.gain * bsht.transpose());
    return out;
}

}  // namespace

Eigen::MatrixXd inflated_filtered_cov(const Eigen::MatrixXd& prior_cov, const SystemModel& model, double beta) {
    model.validate_dims();
    if (!(beta > 0.0)) throw ConfigError("inflated_filtered_cov: beta must be > 0");
    return inflated_update(prior_cov, model, beta).cov;
}

UpdateResult vikf_step(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                       double effective_alpha) {
    detail::require_prior(prior, "vikf_step");
    detail::require_update_dims(prior, z, model, "vikf_step");
    if (!(effective_alpha >= 0.0)) throw ConfigError("vikf_step: alpha must be >= 0");

    const double beta = 1.0 + effective_alpha;
    const InflatedUpdate inflated = inflated_update(prior.cov, model, beta);

    UpdateResult out;
    out.posterior.mean = prior.mean + inflated.gain * (z - model.h * prior.mean);
    out.posterior.kind = EstimateKind::kPosterior;
    out.posterior.step = prior.step;
    out.gain = inflated.gain;
    out.apparent_cov = inflated.cov;
    out.alpha_used = effective_alpha;

    if (effective_alpha == 0.0) {
        out.posterior.cov = inflated.cov;
        return out;
    }
    // Σ_{k|k} = Σ_β Σ_{β²}⁻¹ Σ_β
    const Eigen::MatrixXd cov_beta_sq = inflated_filtered_cov(prior.cov, model, beta * beta);
    const auto llt = linalg::factor_spd(cov_beta_sq, "vikf: Σ_{β²,k|k}");
    out.posterior.cov = linalg::symmetrize(inflated.cov * llt.solve(inflated.cov));
    return out;
}

UpdateResult vikf_update(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                         const VikfConfig& cfg) {
    cfg.validate();
    detail::require_prior(prior, "vikf_update");
    detail::require_update_dims(prior, z, model, "vikf_update");
    const double tol = cfg.psd_tol.value_or(default_psd_tol(prior.cov));

    double alpha = cfg.effective_alpha();
    int reductions = 0;
    if (alpha > 0.0) {
        for (int attempt = 0; attempt <= cfg.max_iters; ++attempt) {
            try {
                UpdateResult step = vikf_step(prior, z, model, alpha);
                if (covariance_not_increased(prior.cov, step.posterior.cov, cfg.check, tol)) {
                    step.reductions = reductions;
                    return step;
                }
            } catch (const NumericalError&) {
            }
            alpha *= cfg.reduce_factor;
            ++reductions;
        }
    }
    UpdateResult out = kf_update(prior, z, model);
    out.reductions = reductions;
    return out;
}

ScalarGain table1_closed_forms(double h, double sigma_prior_sq, double sigma_z_sq, double alpha,
                               Table1Method method) {
    double b = 1.0;
    switch (method) {
        case Table1Method::kKf: b = 1.0; break;
        case Table1Method::kVikf: b = 1.0 + alpha; break;
        case Table1Method::kCbpkf: b = 1.0 + 2.0 * alpha; break;
    }
    const double s = sigma_prior_sq;
    const double denom = b * h * h * s + sigma_z_sq;
    ScalarGain out;
    out.gain = h * b * s / denom;
    out.filtered_var = (b * b * h * h * s + sigma_z_sq) * sigma_z_sq / (denom * denom) * s;
    return out;
}

BoostCalibration calibrate_boost(const CaseParams& calibration_case, const CbPenaltyConfig& cbpkf_cfg,
                                 const BoostSearchOptions& options, std::int64_t burn_in) {
    cbpkf_cfg.validate();
    if (!(options.lower > 0.0 && options.upper > options.lower && options.grid_step > 0.0)) {
        throw ConfigError("calibrate_boost: invalid search interval");
    }
    const Trajectory traj = simulate(calibration_case);
    const StateEstimate init = initial_estimate(calibration_case);

    MethodSpec cb_spec;
    cb_spec.id = "cbpkf";
    cb_spec.kind = MethodKind::kCbpkf;
    cb_spec.cbpkf = cbpkf_cfg;
    const FilterRun cb_run = run_filter(traj, cb_spec, init);
    const double rmse_cb = unconditional_rmse(traj, cb_run.estimates, burn_in);

    BoostCalibration out;
    out.rmse_cbpkf = rmse_cb;

    auto vikf_rmse = [&](double boost) {
        MethodSpec spec;
        spec.id = "vikf";
        spec.kind = MethodKind::kVikf;
        spec.vikf.alpha = cbpkf_cfg.alpha;
        spec.vikf.alpha_boost = boost;
        spec.vikf.reduce_factor = cbpkf_cfg.reduce_factor;
        spec.vikf.max_iters = cbpkf_cfg.max_iters;
        spec.vikf.psd_tol = cbpkf_cfg.psd_tol;
        spec.vikf.check = cbpkf_cfg.check;
        ++out.evaluations;
        return unconditional_rmse(traj, run_filter(traj, spec, init).estimates, burn_in);
    };
    const double exact = 1e-12 * rmse_cb;

    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double b = options.lower + i * options.grid_step;
        if (b > options.upper + 1e-12) break;
        grid.push_back(std::min(b, options.upper));
    }
    if (grid.back() < options.upper) grid.push_back(options.upper);

    std::vector<double> diff(grid.size());
    std::size_t best = 0;
    double best_rmse = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double r = vikf_rmse(grid[i]);
        diff[i] = r - rmse_cb;
        if (std::abs(diff[i]) < std::abs(diff[best]) || i == 0) {
            best = i;
            best_rmse = r;
        }
    }

    auto finish = [&](double boost, double rmse_v) {
        out.boost = boost;
        out.rmse_vikf = rmse_v;
        out.gap = rmse_cb > 0.0 ? std::abs(rmse_v - rmse_cb) / rmse_cb : 0.0;
        if (out.gap > options.acceptable_gap) {
            out.warning = "calibrate_boost: best gap " + std::to_string(out.gap) + " exceeds " +
                          std::to_string(options.acceptable_gap);
        }
        return out;
    };

    if (std::abs(diff[best]) <= exact) return finish(grid[best], best_rmse);

    // First bracket [b_i, b_{i+1}] over which the RMSE difference changes sign.
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        if ((diff[i] < 0.0) == (diff[i + 1] < 0.0)) continue;
        double lo = grid[i];
        double hi = grid[i + 1];
        double d_lo = diff[i];
        std::size_t end = std::abs(diff[i]) <= std::abs(diff[i + 1]) ? i : i + 1;
        double best_b = grid[end];
        double best_r = rmse_cb + diff[end];
        while (hi - lo > options.tolerance) {
            const double mid = 0.5 * (lo + hi);
            const double r = vikf_rmse(mid);
            const double d = r - rmse_cb;
            if (std::abs(d) < std::abs(best_r - rmse_cb)) {
                best_b = mid;
                best_r = r;
            }
            if (std::abs(d) <= exact) break;
            if ((d < 0.0) == (d_lo < 0.0)) {
                lo = mid;
                d_lo = d;
            } else {
                hi = mid;
            }
        }
        return finish(best_b, best_r);
    }
    return finish(grid[best], best_rmse);
}

}  // namespace cbpkf
