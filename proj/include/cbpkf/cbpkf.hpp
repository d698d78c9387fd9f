#pragma once

#include "cbpkf/types.hpp"

#include <Eigen/Dense>

#include <mutex>
#include <optional>

namespace cbpkf {

/// How the CB-penalty gain C₁ (m x n block of the observation-conditional
/// regression) is evaluated.
enum class CbGainForm {
    /// Full evaluation with Ψ_XX = Σ_{k|k-1} and Uᵀ = Hᵀ:
    ///   G₂ = (HᵀH + I)⁻¹,  G₁ = H G₂
    ///   L  = G₂ [Hᵀ(HΨHᵀ + 2R)H + HᵀHΨ + ΨHᵀH + Ψ + 2Σ] G₂
    ///   C₁ = [(HΨHᵀ + R) G₁ + HΨ G₂] L⁻¹
    kFull,
    /// C₁ = H. The one-dimensional closed forms
    /// (gain h(1+2α)σ²/(h²(1+2α)σ² + σ_z²)) hold exactly for this form; the
    /// full form gives a somewhat smaller gain in 1-D.
    kLinearized,
};

/// How "Σ_{k|k} ≤ Σ_{k|k-1}" is tested after each CB-penalized update.
enum class CovarianceCheck {
    kDiagonal,  ///< diag(Σ_{k|k}) ≤ diag(Σ_{k|k-1}) + tol element-wise
    kPsd,       ///< Σ_{k|k-1} − Σ_{k|k} has no eigenvalue below −tol
};

struct CbPenaltyConfig {
    double alpha = 0.0;
    double reduce_factor = 0.5;  ///< c in α_i = c α_{i-1}
    int max_iters = 8;
    /// Absolute tolerance for the covariance check; defaults to
    /// 1e-9 · trace(Σ_{k|k-1}) when unset.
    std::optional<double> psd_tol;
    CovarianceCheck check = CovarianceCheck::kDiagonal;
    CbGainForm c1_form = CbGainForm::kFull;

    void validate() const;
};

struct LambdaBlocks {
    Eigen::MatrixXd l11;  ///< n x n
    Eigen::MatrixXd l12;  ///< n x m   (Λ₂₁ = Λ₁₂ᵀ)
    Eigen::MatrixXd l22;  ///< m x m   (= Σ_{k|k-1})
};

/// Inverse blocks of Λ and the observation/model weights ϖ₁ (m x n),
/// ϖ₂ (m x m). When Λ₁₁ or its Schur complement is numerically singular the
/// Γ blocks are left empty and the weights come from the bordered system
///   [Λ  −Ĥ; Hᵀ_aug  0] [Wᵀ; V] = [0; I]
/// normalized so that ϖ₁H + ϖ₂ = I; `normalizer` then holds Vᵀ, the limit
/// of [ϖ₁H + ϖ₂]⁻¹ for the unnormalized weights.
struct CbWeights {
    Eigen::MatrixXd gamma11;
    Eigen::MatrixXd gamma12;
    Eigen::MatrixXd gamma22;
    Eigen::MatrixXd w1;
    Eigen::MatrixXd w2;
    bool bordered = false;
    Eigen::MatrixXd normalizer;  ///< only set when bordered
};

struct CbpkfIntermediates {
    Eigen::MatrixXd c1;
    Eigen::MatrixXd lambda11;
    Eigen::MatrixXd lambda12;
    Eigen::MatrixXd lambda22;
    Eigen::MatrixXd gamma11;
    Eigen::MatrixXd gamma12;
    Eigen::MatrixXd gamma22;
    Eigen::MatrixXd w1;
    Eigen::MatrixXd w2;
    Eigen::MatrixXd gain;
    double alpha_used = 0.0;
    bool bordered = false;
};

struct CbpkfUpdate : UpdateResult {
    CbpkfIntermediates intermediates;
};

/// Caches G₂ = (HᵀH + I)⁻¹ for a time-invariant H. Thread-safe; recomputes
/// whenever H changes.
class GramInverseCache {
public:
    Eigen::MatrixXd get(const Eigen::MatrixXd& h);
    int computations() const;

private:
    mutable std::mutex mu_;
    Eigen::MatrixXd h_;
    Eigen::MatrixXd g2_;
    int computations_ = 0;
};

/// (HᵀH + I)⁻¹
Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& h);

Eigen::MatrixXd compute_c1(const SystemModel& model, const Eigen::MatrixXd& sigma_prior,
                           CbGainForm form = CbGainForm::kFull, GramInverseCache* cache = nullptr);

/// Λ₁₁ = R + α(1−α)C₁ΨC₁ᵀ − αHΨC₁ᵀ − αC₁ΨHᵀ,  Λ₁₂ = −αC₁Ψ,  Λ₂₂ = Σ.
LambdaBlocks compute_lambda_blocks(const SystemModel& model, const Eigen::MatrixXd& sigma_prior,
                                   const Eigen::MatrixXd& c1, double alpha);

/// Γ = Λ⁻¹ by blocks (Schur complement on Λ₁₁) and
///   ϖ₁ = Ĥ₁ᵀΓ₁₁ + Γ₂₁,  ϖ₂ = Ĥ₁ᵀΓ₁₂ + Γ₂₂,  Ĥ₁ᵀ = Hᵀ + αC₁ᵀ.
CbWeights compute_weights(const SystemModel& model, const Eigen::MatrixXd& c1,
                          const LambdaBlocks& lambda, double alpha);

/// One CB-penalized update at a fixed α, without the reduction loop.
CbpkfUpdate cbpkf_step(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                       double alpha, CbGainForm form = CbGainForm::kFull,
                       GramInverseCache* cache = nullptr);

/// Full update: tries α, cα, c²α, … (max_iters reductions) until the
/// covariance check passes; falls back to the exact KF step with α = 0.
CbpkfUpdate cbpkf_update(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                         const CbPenaltyConfig& cfg, GramInverseCache* cache = nullptr);

/// The covariance check used by the reduction loops.
bool covariance_not_increased(const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& post_cov,
                              CovarianceCheck check, double tol);

double default_psd_tol(const Eigen::MatrixXd& prior_cov);

}  // namespace cbpkf
