#pragma once

#include "cbpkf/cbpkf.hpp"
#include "cbpkf/system_sim.hpp"
#include "cbpkf/types.hpp"

#include <optional>
#include <string>

namespace cbpkf {

/// Variance-inflated KF: a KF update with the prior covariance scaled by
/// β = 1 + α', α' = alpha_boost · alpha.
struct VikfConfig {
    double alpha = 0.0;
    double alpha_boost = 1.0;
    double reduce_factor = 0.5;
    int max_iters = 8;
    std::optional<double> psd_tol;
    CovarianceCheck check = CovarianceCheck::kDiagonal;

    double effective_alpha() const { return alpha_boost * alpha; }
    void validate() const;
};

/// Filtered covariance of a KF that believes the prior covariance is βΣ:
///   Σ_β = βΣ − βΣHᵀ(HβΣHᵀ + R)⁻¹HβΣ
Eigen::MatrixXd inflated_filtered_cov(const Eigen::MatrixXd& prior_cov, const SystemModel& model, double beta);

/// One variance-inflated update at fixed effective α (no reduction loop).
/// Mean from the KF with βΣ; true error covariance Σ_β Σ_{β²}⁻¹ Σ_β;
/// apparent covariance Σ_β.
UpdateResult vikf_step(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                       double effective_alpha);

/// Update with the same α-reduction contract as cbpkf_update; the reduction
/// acts on the effective α and `alpha_used` reports the effective value.
UpdateResult vikf_update(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                         const VikfConfig& cfg);

enum class Table1Method { kKf, kVikf, kCbpkf };

struct ScalarGain {
    double gain = 0.0;
    double filtered_var = 0.0;
};

/// One-dimensional gain and filtered error variance for observation
/// coefficient h, prior variance σ², observation variance σ_z² and CB
/// weight α. The three methods differ only in the prior inflation factor b:
/// 1 (KF), 1 + α (VIKF), 1 + 2α (CBPKF):
///   κ  = h b σ² / (h² b σ² + σ_z²)
///   σ²_{k|k} = (b² h² σ² + σ_z²) σ_z² σ² / (b h² σ² + σ_z²)²
ScalarGain table1_closed_forms(double h, double sigma_prior_sq, double sigma_z_sq, double alpha,
                               Table1Method method);

struct BoostSearchOptions {
    double lower = 1.0;
    double upper = 2.5;
    double grid_step = 0.1;
    double tolerance = 1e-4;  ///< bracket width at which refinement stops
    double acceptable_gap = 0.05;
};

struct BoostCalibration {
    double boost = 1.0;
    double gap = 0.0;         ///< |RMSE_vikf − RMSE_cbpkf| / RMSE_cbpkf at `boost`
    double rmse_cbpkf = 0.0;
    double rmse_vikf = 0.0;
    int evaluations = 0;
    std::optional<std::string> warning;
};

/// Finds the alpha_boost in [lower, upper] for which VIKF(α·boost) has the
/// same unconditional RMSE as CBPKF(α) on a trajectory simulated from
/// `calibration_case`: a grid scan followed by bisection on the sign change
/// of the RMSE difference. With no sign change the grid minimizer of the gap
/// is returned (the lowest one on ties).
BoostCalibration calibrate_boost(const CaseParams& calibration_case, const CbPenaltyConfig& cbpkf_cfg,
                                 const BoostSearchOptions& options = {}, std::int64_t burn_in = 100);

}  // namespace cbpkf
