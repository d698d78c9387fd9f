#include "cbpkf/cbpkf.hpp"

#include "cbpkf/error.hpp"
#include "cbpkf/kalman.hpp"
#include "cbpkf/linalg.hpp"

#include <cmath>

namespace cbpkf {
namespace {

// Below this reciprocal condition number the block inverse of Λ is not
// trusted and the bordered system is solved instead.
constexpr double kBlockInverseMinRcond = 1e-10;

CbpkfIntermediates make_intermediates(const Eigen::MatrixXd& c1, LambdaBlocks lambda, CbWeights w,
                                      const Eigen::MatrixXd& gain, double alpha) {
    CbpkfIntermediates out;
    out.c1 = c1;
    out.lambda11 = std::move(lambda.l11);
    out.lambda12 = std::move(lambda.l12);
    out.lambda22 = std::move(lambda.l22);
    out.gamma11 = std::move(w.gamma11);
    out.gamma12 = std::move(w.gamma12);
    out.gamma22 = std::move(w.gamma22);
    out.w1 = std::move(w.w1);
    out.w2 = std::move(w.w2);
    out.gain = gain;
    out.alpha_used = alpha;
    out.bordered = w.bordered;
    return out;
}

CbWeights bordered_weights(const SystemModel& model, const Eigen::MatrixXd& c1, const LambdaBlocks& lambda,
                           double alpha) {
    const Eigen::Index n = model.obs_dim();
    const Eigen::Index m = model.state_dim();
    const Eigen::Index nm = n + m;

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nm + m, nm + m);
    kkt.topLeftCorner(n, n) = lambda.l11;
    kkt.block(0, n, n, m) = lambda.l12;
    kkt.block(n, 0, m, n) = lambda.l12.transpose();
    kkt.block(n, n, m, m) = lambda.l22;
    // −Ĥ with Ĥ = [H + αC₁; I]
    kkt.block(0, nm, n, m) = -(model.h + alpha * c1);
    kkt.block(n, nm, m, m) = -Eigen::MatrixXd::Identity(m, m);
    // H_augᵀ = [Hᵀ I]
    kkt.block(nm, 0, m, n) = model.h.transpose();
    kkt.block(nm, n, m, m) = Eigen::MatrixXd::Identity(m, m);

    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nm + m, m);
    rhs.bottomRows(m) = Eigen::MatrixXd::Identity(m, m);

    const auto lu = linalg::factor_general(kkt, "compute_weights: bordered system");
    const Eigen::MatrixXd sol = lu.solve(rhs);

    CbWeights w;
    w.bordered = true;
    w.w1 = sol.topRows(n).transpose();
    w.w2 = sol.middleRows(n, m).transpose();
    w.normalizer = sol.bottomRows(m).transpose();
    return w;
}

}  // namespace

void CbPenaltyConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("CbPenaltyConfig: alpha must be >= 0");
    if (!(reduce_factor > 0.0 && reduce_factor < 1.0)) {
        throw ConfigError("CbPenaltyConfig: reduce_factor must lie in (0, 1)");
    }
    if (max_iters < 1) throw ConfigError("CbPenaltyConfig: max_iters must be >= 1");
    if (psd_tol && !(*psd_tol >= 0.0)) throw ConfigError("CbPenaltyConfig: psd_tol must be >= 0");
}

Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& h) {
    const Eigen::Index m = h.cols();
    const Eigen::MatrixXd gram = h.transpose() * h + Eigen::MatrixXd::Identity(m, m);
    const auto llt = linalg::factor_spd(gram, "gram_inverse: HᵀH + I");
    return linalg::symmetrize(llt.solve(Eigen::MatrixXd::Identity(m, m)));
}

Eigen::MatrixXd GramInverseCache::get(const Eigen::MatrixXd& h) {
    std::lock_guard<std::mutex> lock(mu_);
    if (computations_ == 0 || h.rows() != h_.rows() || h.cols() != h_.cols() || h != h_) {
        g2_ = gram_inverse(h);
        h_ = h;
        ++computations_;
    }
    return g2_;
}

int GramInverseCache::computations() const {
    std::lock_guard<std::mutex> lock(mu_);
    return computations_;
}

Eigen::MatrixXd compute_c1(const SystemModel& model, const Eigen::MatrixXd& sigma_prior, CbGainForm form,
                           GramInverseCache* cache) {
    model.validate_dims();
    if (form == CbGainForm::kLinearized) return model.h;

    const Eigen::MatrixXd& h = model.h;
    const Eigen::MatrixXd& psi = sigma_prior;  // Ψ_XX = Σ_{k|k-1}
    const Eigen::MatrixXd g2 = cache != nullptr ? cache->get(h) : gram_inverse(h);
    const Eigen::MatrixXd g1 = h * g2;  // n x m
    const Eigen::MatrixXd hpsi = h * psi;                               // n x m
    const Eigen::MatrixXd psi_zz = hpsi * h.transpose() + model.r;      // n x n
    const Eigen::MatrixXd hth = h.transpose() * h;                      // m x m

    const Eigen::MatrixXd inner = h.transpose() * (psi_zz + model.r) * h + hth * psi + psi * hth + psi +
                                  2.0 * sigma_prior;
    const Eigen::MatrixXd l = linalg::symmetrize(g2 * inner * g2);
    const Eigen::MatrixXd x = psi_zz * g1 + hpsi * g2;  // n x m

    const auto llt = linalg::factor_spd(l, "compute_c1: L_k");
    // C₁ = X L⁻¹  <=>  C₁ᵀ = L⁻¹ Xᵀ  (L symmetric)
    return llt.solve(x.transpose()).transpose();
}

LambdaBlocks compute_lambda_blocks(const SystemModel& model, const Eigen::MatrixXd& sigma_prior,
                                   const Eigen::MatrixXd& c1, double alpha) {
    if (!(alpha >= 0.0)) throw ConfigError("compute_lambda_blocks: alpha must be >= 0");
    if (c1.rows() != model.obs_dim() || c1.cols() != model.state_dim()) {
        throw ConfigError("compute_lambda_blocks: C1 must be n x m");
    }
    const Eigen::MatrixXd c_psi = c1 * sigma_prior;               // n x m
    const Eigen::MatrixXd h_psi_ct = model.h * c_psi.transpose();  // HΨC₁ᵀ
    LambdaBlocks out;
    out.l11 = linalg::symmetrize(model.r + alpha * (1.0 - alpha) * c_psi * c1.transpose() -
                                 alpha * h_psi_ct - alpha * h_psi_ct.transpose());
    out.l12 = -alpha * c_psi;
    out.l22 = sigma_prior;
    return out;
}

CbWeights compute_weights(const SystemModel& model, const Eigen::MatrixXd& c1, const LambdaBlocks& lambda,
                          double alpha) {
    const Eigen::MatrixXd h1t = model.h.transpose() + alpha * c1.transpose();  // Ĥ₁ᵀ, m x n
    try {
        const auto lu11 = linalg::factor_general(lambda.l11, "compute_weights: Λ11", kBlockInverseMinRcond);
        const Eigen::MatrixXd l11_inv = lu11.inverse();
        const Eigen::MatrixXd y = l11_inv * lambda.l12;  // Λ₁₁⁻¹Λ₁₂, n x m
        const Eigen::MatrixXd schur = lambda.l22 - lambda.l12.transpose() * y;
        const auto lu22 =
            linalg::factor_general(schur, "compute_weights: Schur complement of Λ11", kBlockInverseMinRcond);

        CbWeights w;
        w.gamma22 = lu22.inverse();
        w.gamma12 = -y * w.gamma22;
        w.gamma11 = linalg::symmetrize(l11_inv + y * w.gamma22 * y.transpose());
        w.w1 = h1t * w.gamma11 + w.gamma12.transpose();
        w.w2 = h1t * w.gamma12 + w.gamma22;
        return w;
    } catch (const NumericalError&) {
        return bordered_weights(model, c1, lambda, alpha);
    }
}

namespace {

CbpkfUpdate step_with_c1(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                         double alpha, const Eigen::MatrixXd& c1) {
    LambdaBlocks lambda = compute_lambda_blocks(model, prior.cov, c1, alpha);
    CbWeights w = compute_weights(model, c1, lambda, alpha);

    const Eigen::MatrixXd a = w.w1 * model.h + w.w2;  // ϖ₁H + ϖ₂
    const auto lu = linalg::factor_general(a, "cbpkf_step: ϖ1 H + ϖ2");
    const Eigen::MatrixXd a_inv = lu.inverse();
    const Eigen::MatrixXd gain = a_inv * w.w1;

    CbpkfUpdate out;
    out.posterior.mean = prior.mean + gain * (z - model.h * prior.mean);
    out.posterior.cov = linalg::symmetrize(
        a_inv * (w.w1 * model.r * w.w1.transpose() + w.w2 * prior.cov * w.w2.transpose()) * a_inv.transpose());
    out.posterior.kind = EstimateKind::kPosterior;
    out.posterior.step = prior.step;
    out.gain = gain;
    out.apparent_cov = linalg::symmetrize(alpha * prior.cov + (w.bordered ? w.normalizer : a_inv));
    out.alpha_used = alpha;
    out.reductions = 0;
    out.intermediates = make_intermediates(c1, std::move(lambda), std::move(w), gain, alpha);
    return out;
}

}  // namespace

CbpkfUpdate cbpkf_step(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                       double alpha, CbGainForm form, GramInverseCache* cache) {
    detail::require_prior(prior, "cbpkf_step");
    detail::require_update_dims(prior, z, model, "cbpkf_step");
    if (!(alpha >= 0.0)) throw ConfigError("cbpkf_step: alpha must be >= 0");
    return step_with_c1(prior, z, model, alpha, compute_c1(model, prior.cov, form, cache));
}

double default_psd_tol(const Eigen::MatrixXd& prior_cov) { return 1e-9 * prior_cov.trace(); }

bool covariance_not_increased(const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& post_cov,
                              CovarianceCheck check, double tol) {
    if (!post_cov.allFinite()) return false;
    if (check == CovarianceCheck::kDiagonal) {
        return ((post_cov.diagonal() - prior_cov.diagonal()).array() <= tol).all();
    }
    return linalg::is_psd(prior_cov - post_cov, tol);
}

CbpkfUpdate cbpkf_update(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                         const CbPenaltyConfig& cfg, GramInverseCache* cache) {
    cfg.validate();
    detail::require_prior(prior, "cbpkf_update");
    detail::require_update_dims(prior, z, model, "cbpkf_update");
    const double tol = cfg.psd_tol.value_or(default_psd_tol(prior.cov));

    const auto with_step = [&prior](const NumericalError& e) {
        return NumericalError("cbpkf_update at step " + std::to_string(prior.step) + ": " + e.what());
    };

    Eigen::MatrixXd c1;
    try {
        c1 = compute_c1(model, prior.cov, cfg.c1_form, cache);
    } catch (const NumericalError& e) {
        if (cfg.alpha > 0.0) throw with_step(e);
    }

    double alpha = cfg.alpha;
    int reductions = 0;
    if (alpha > 0.0) {
        for (int attempt = 0; attempt <= cfg.max_iters; ++attempt) {
            try {
                CbpkfUpdate step = step_with_c1(prior, z, model, alpha, c1);
                if (covariance_not_increased(prior.cov, step.posterior.cov, cfg.check, tol)) {
                    step.reductions = reductions;
                    return step;
                }
            } catch (const NumericalError&) {
                // treated like a failed covariance check
            }
            alpha *= cfg.reduce_factor;
            ++reductions;
        }
    }

    // α = 0: the exact KF step.
    UpdateResult kf;
    try {
        kf = kf_update(prior, z, model);
    } catch (const NumericalError& e) {
        throw with_step(e);
    }
    CbpkfUpdate out;
    static_cast<UpdateResult&>(out) = kf;
    out.alpha_used = 0.0;
    out.reductions = reductions;
    out.intermediates.gain = kf.gain;
    if (c1.size() > 0) {
        LambdaBlocks lambda = compute_lambda_blocks(model, prior.cov, c1, 0.0);
        try {
            CbWeights w = compute_weights(model, c1, lambda, 0.0);
            out.intermediates = make_intermediates(c1, std::move(lambda), std::move(w), kf.gain, 0.0);
        } catch (const NumericalError&) {
            out.intermediates.c1 = c1;
        }
    }
    return out;
}

}  // namespace cbpkf
