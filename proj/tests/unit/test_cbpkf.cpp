#include "cbpkf/cbpkf.hpp"
#include "cbpkf/error.hpp"
#include "cbpkf/kalman.hpp"
#include "cbpkf/linalg.hpp"
#include "cbpkf/system_sim.hpp"
#include "cbpkf/vikf.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace cbpkf;
using namespace testutil;

namespace {

// C from the augmented observation model (H stacked over I, R next to Σ),
// keeping only the observation block.
Eigen::MatrixXd c1_augmented_oracle(const SystemModel& s, const Eigen::MatrixXd& sigma) {
    const Eigen::Index n = s.h.rows(), m = s.h.cols();
    Eigen::MatrixXd haug(n + m, m);
    haug << s.h, Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd raug = Eigen::MatrixXd::Zero(n + m, n + m);
    raug.topLeftCorner(n, n) = s.r;
    raug.bottomRightCorner(m, m) = sigma;
    const Eigen::MatrixXd g = (haug.transpose() * haug).inverse() * haug.transpose();  // U = H_aug
    const Eigen::MatrixXd psi_zz = haug * sigma * haug.transpose();
    const Eigen::MatrixXd c =
        (psi_zz + raug) * g.transpose() * (g * (psi_zz + 2.0 * raug) * g.transpose()).inverse();
    return c.topRows(n);
}

Eigen::MatrixXd assemble(const Eigen::MatrixXd& a11, const Eigen::MatrixXd& a12, const Eigen::MatrixXd& a22) {
    const Eigen::Index n = a11.rows(), m = a22.rows();
    Eigen::MatrixXd out(n + m, n + m);
    out << a11, a12, a12.transpose(), a22;
    return out;
}

}  // namespace

TEST(CbpkfC1, MatchesAugmentedOracle) {
    std::mt19937 g(10);
    for (auto [m, n] : {std::pair{2, 3}, std::pair{1, 10}, std::pair{3, 2}}) {
        const SystemModel s = random_model(g, m, n);
        const Eigen::MatrixXd sigma = random_spd(g, m);
        EXPECT_LT(rel_diff(compute_c1(s, sigma), c1_augmented_oracle(s, sigma)), 1e-10);
    }
}

TEST(CbpkfC1, ZeroObservationMatrix) {
    std::mt19937 g(11);
    SystemModel s = random_model(g, 2, 3);
    s.h.setZero();
    const Eigen::MatrixXd sigma = random_spd(g, 2);
    const Eigen::MatrixXd c1 = compute_c1(s, sigma);
    EXPECT_TRUE(c1.allFinite());
    EXPECT_LT(rel_diff(c1, c1_augmented_oracle(s, sigma)), 1e-10);
    // No observation sensitivity: the observations carry no weight.
    const CbpkfUpdate u = cbpkf_step(random_prior(g, 2), random_matrix(g, 3, 1), s, 0.5);
    EXPECT_LT(u.gain.norm(), 1e-12);
}

TEST(CbpkfC1, LinearizedFormIsH) {
    std::mt19937 g(12);
    const SystemModel s = random_model(g, 2, 4);
    EXPECT_EQ(compute_c1(s, random_spd(g, 2), CbGainForm::kLinearized), s.h);
}

TEST(CbpkfC1, GramCacheComputesOnce) {
    std::mt19937 g(13);
    const SystemModel s = random_model(g, 2, 5);
    GramInverseCache cache;
    for (int i = 0; i < 10; ++i) compute_c1(s, random_spd(g, 2), CbGainForm::kFull, &cache);
    EXPECT_EQ(cache.computations(), 1);
    SystemModel s2 = s;
    s2.h(0, 0) += 1.0;
    compute_c1(s2, random_spd(g, 2), CbGainForm::kFull, &cache);
    EXPECT_EQ(cache.computations(), 2);
    EXPECT_LT(rel_diff(cache.get(s.h), gram_inverse(s.h)), 1e-15);
}

TEST(CbpkfLambda, AlphaZero) {
    std::mt19937 g(14);
    const SystemModel s = random_model(g, 2, 3);
    const Eigen::MatrixXd sigma = random_spd(g, 2);
    const LambdaBlocks l = compute_lambda_blocks(s, sigma, compute_c1(s, sigma), 0.0);
    EXPECT_LT(rel_diff(l.l11, s.r), 1e-15);
    EXPECT_EQ(l.l12.norm(), 0.0);
    EXPECT_EQ(l.l22, sigma);
}

TEST(CbpkfLambda, AlphaOneDropsQuadraticTerm) {
    std::mt19937 g(15);
    const SystemModel s = random_model(g, 2, 3);
    const Eigen::MatrixXd sigma = random_spd(g, 2);
    const Eigen::MatrixXd c1 = compute_c1(s, sigma);
    const LambdaBlocks l = compute_lambda_blocks(s, sigma, c1, 1.0);
    const Eigen::MatrixXd expect = s.r - s.h * sigma * c1.transpose() - c1 * sigma * s.h.transpose();
    EXPECT_LT(rel_diff(l.l11, expect), 1e-14);
}

TEST(CbpkfLambda, IndependentTranscription) {
    std::mt19937 g(16);
    const SystemModel s = random_model(g, 1, 10);
    const Eigen::MatrixXd sigma = random_spd(g, 1);
    const Eigen::MatrixXd c1 = compute_c1(s, sigma);
    const double a = 0.6, p = sigma(0, 0);
    const LambdaBlocks l = compute_lambda_blocks(s, sigma, c1, a);
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            const double v = s.r(i, j) + a * (1 - a) * c1(i, 0) * p * c1(j, 0) - a * s.h(i, 0) * p * c1(j, 0) -
                             a * c1(i, 0) * p * s.h(j, 0);
            EXPECT_NEAR(l.l11(i, j), v, 1e-13);
        }
        EXPECT_NEAR(l.l12(i, 0), -a * c1(i, 0) * p, 1e-14);
    }
    EXPECT_EQ(l.l22, sigma);
}

TEST(CbpkfWeights, GammaIsLambdaInverse) {
    std::mt19937 g(17);
    std::uniform_real_distribution<double> ud(0.01, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const int m = 1 + trial % 4, n = 1 + (trial / 4) % 6;
        const SystemModel s = random_model(g, m, n);
        const Eigen::MatrixXd sigma = random_spd(g, m);
        const double a = ud(g);
        const Eigen::MatrixXd c1 = compute_c1(s, sigma);
        const LambdaBlocks l = compute_lambda_blocks(s, sigma, c1, a);
        const CbWeights w = compute_weights(s, c1, l, a);
        if (w.bordered) continue;
        const Eigen::MatrixXd lam = assemble(l.l11, l.l12, l.l22);
        const Eigen::MatrixXd gam = assemble(w.gamma11, w.gamma12, w.gamma22);
        const auto id = Eigen::MatrixXd::Identity(n + m, n + m);
        ASSERT_LT((lam * gam - id).norm(), 1e-8 * std::max(1.0, lam.norm() * gam.norm()));
        ASSERT_LT(rel_diff(gam, lam.inverse()), 1e-8);
        ++checked;
    }
    EXPECT_GT(checked, 250);
}

TEST(CbpkfWeights, AlphaZeroIsInformationForm) {
    std::mt19937 g(18);
    const SystemModel s = random_model(g, 3, 4);
    const Eigen::MatrixXd sigma = random_spd(g, 3);
    const Eigen::MatrixXd c1 = compute_c1(s, sigma);
    const CbWeights w = compute_weights(s, c1, compute_lambda_blocks(s, sigma, c1, 0.0), 0.0);
    EXPECT_LT(rel_diff(w.w1, s.h.transpose() * s.r.inverse()), 1e-12);
    EXPECT_LT(rel_diff(w.w2, sigma.inverse()), 1e-12);
}

TEST(CbpkfStep, ScalarTableValues) {
    // Unit inputs, α = 0.5: κ = 2/3, σ²_{k|k} = 5/9.
    const CbpkfUpdate u = cbpkf_step(scalar_prior(0, 1), Eigen::VectorXd::Constant(1, 1.0), scalar_model(1, 1), 0.5,
                                     CbGainForm::kLinearized);
    EXPECT_NEAR(u.gain(0, 0), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(u.posterior.cov(0, 0), 5.0 / 9.0, 1e-12);
    EXPECT_NEAR(u.posterior.mean(0), 2.0 / 3.0, 1e-12);
}

TEST(CbpkfStep, ScalarGridMatchesClosedForm) {
    for (double h : {0.5, 1.0, 2.0})
        for (double s2 : {0.25, 1.0, 4.0})
            for (double r : {0.25, 1.0, 4.0})
                for (int i = 0; i <= 10; ++i) {
                    const double a = 0.1 * i;
                    const auto ref = table1_closed_forms(h, s2, r, a, Table1Method::kCbpkf);
                    const CbpkfUpdate u = cbpkf_step(scalar_prior(0, s2), Eigen::VectorXd::Zero(1),
                                                     scalar_model(h, r), a, CbGainForm::kLinearized);
                    ASSERT_NEAR(u.gain(0, 0), ref.gain, 1e-12) << h << ' ' << s2 << ' ' << r << ' ' << a;
                    ASSERT_NEAR(u.posterior.cov(0, 0), ref.filtered_var, 1e-12);
                }
}

TEST(CbpkfStep, FullFormDiffersFromLinearizedIn1D) {
    const CbpkfUpdate u = cbpkf_step(scalar_prior(0, 1), Eigen::VectorXd::Zero(1), scalar_model(1, 1), 0.5);
    EXPECT_NEAR(u.intermediates.c1(0, 0), 0.75, 1e-14);
    EXPECT_GT(u.gain(0, 0), 0.5);
    EXPECT_LT(u.gain(0, 0), 2.0 / 3.0);
}

TEST(CbpkfStep, BorderedPathIsContinuous) {
    // r = h²σ²α(1+2α) makes Λ exactly singular for C₁ = H.
    const double a = 0.5;
    const auto at = [](double alpha) {
        return cbpkf_step(scalar_prior(0, 1), Eigen::VectorXd::Zero(1), scalar_model(1, 1), alpha,
                          CbGainForm::kLinearized);
    };
    const CbpkfUpdate mid = at(a);
    EXPECT_TRUE(mid.intermediates.bordered);
    const CbpkfUpdate lo = at(a - 1e-6), hi = at(a + 1e-6);
    EXPECT_FALSE(lo.intermediates.bordered);
    EXPECT_NEAR(mid.gain(0, 0), 0.5 * (lo.gain(0, 0) + hi.gain(0, 0)), 1e-8);
    EXPECT_NEAR(mid.apparent_cov(0, 0), 0.5 * (lo.apparent_cov(0, 0) + hi.apparent_cov(0, 0)), 1e-6);
}

TEST(CbpkfStep, AlphaZeroBlockAlgebraIsKf) {
    std::mt19937 g(19);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + trial % 5, n = 1 + trial % 7;
        const StateEstimate prior = random_prior(g, m);
        const SystemModel s = random_model(g, m, n);
        const Eigen::VectorXd z = random_matrix(g, n, 1);
        const UpdateResult kf = kf_update(prior, z, s);
        const CbpkfUpdate cb = cbpkf_step(prior, z, s, 0.0);
        ASSERT_LT(rel_diff(cb.posterior.mean, kf.posterior.mean), 1e-10);
        ASSERT_LT(rel_diff(cb.posterior.cov, kf.posterior.cov), 1e-10);
        ASSERT_LT(rel_diff(cb.gain, kf.gain), 1e-10);
    }
}

TEST(CbpkfStep, Unbiasedness) {
    std::mt19937 g(20);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + trial % 3, n = 1 + trial % 5;
        const SystemModel s = random_model(g, m, n);
        const CbpkfUpdate u = cbpkf_step(random_prior(g, m), random_matrix(g, n, 1), s, ud(g),
                                         trial % 2 ? CbGainForm::kFull : CbGainForm::kLinearized);
        const auto& it = u.intermediates;
        const Eigen::MatrixXd a = it.w1 * s.h + it.w2;
        Eigen::MatrixXd w(m, n + m);
        w << a.inverse() * it.w1, a.inverse() * it.w2;
        Eigen::MatrixXd haug(n + m, m);
        haug << s.h, Eigen::MatrixXd::Identity(m, m);
        ASSERT_LT((w * haug - Eigen::MatrixXd::Identity(m, m)).norm(), 1e-8);
    }
}

TEST(CbpkfStep, CovariancesPsdAndApparentFromDenseInverse) {
    std::mt19937 g(21);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const int m = 1 + trial % 4, n = 1 + trial % 6;
        const SystemModel s = random_model(g, m, n);
        const StateEstimate prior = random_prior(g, m);
        const double a = ud(g);
        const CbpkfUpdate u = cbpkf_step(prior, random_matrix(g, n, 1), s, a);
        const Eigen::MatrixXd& p = u.posterior.cov;
        const double tol = 1e-10 * std::max(1.0, p.trace());
        ASSERT_LT((p - p.transpose()).norm(), tol);
        ASSERT_TRUE(linalg::is_psd(p, tol));
        if (u.intermediates.bordered) continue;
        // apparent = αΣ + [ϖ₁H + ϖ₂]⁻¹ with Γ from a dense inverse of Λ
        const auto& it = u.intermediates;
        Eigen::MatrixXd lam(n + m, n + m);
        lam << it.lambda11, it.lambda12, it.lambda12.transpose(), it.lambda22;
        const Eigen::MatrixXd gam = lam.inverse();
        const Eigen::MatrixXd ht = s.h.transpose() + a * it.c1.transpose();
        const Eigen::MatrixXd w1 = ht * gam.topLeftCorner(n, n) + gam.bottomLeftCorner(m, n);
        const Eigen::MatrixXd w2 = ht * gam.topRightCorner(n, m) + gam.bottomRightCorner(m, m);
        const Eigen::MatrixXd raw = a * prior.cov + (w1 * s.h + w2).inverse();
        const Eigen::MatrixXd expect = 0.5 * (raw + raw.transpose());
        ASSERT_LT(rel_diff(u.apparent_cov, expect), 1e-7) << "trial " << trial;
    }
}

// The apparent covariance is the penalized objective, not an upper bound on
// the error covariance: with C₁ = H in 1-D it can sit below the posterior.
TEST(CbpkfStep, ApparentNotAnUpperBound) {
    const CbpkfUpdate u = cbpkf_step(scalar_prior(0, 4.0), Eigen::VectorXd::Zero(1), scalar_model(1.0, 1.0), 0.5,
                                     CbGainForm::kLinearized);
    // Joseph form with gain 4·2/(4·2 + 1) = 8/9
    const double k = 8.0 / 9.0;
    EXPECT_NEAR(u.posterior.cov(0, 0), (1 - k) * (1 - k) * 4 + k * k, 1e-12);
    EXPECT_LT(u.apparent_cov(0, 0), u.posterior.cov(0, 0));
}

TEST(CbpkfStep, ScalarGainMonotoneInAlpha) {
    for (auto form : {CbGainForm::kLinearized, CbGainForm::kFull}) {
        for (double r : {0.25, 1.0, 4.0}) {
            double prev_gain = -1, prev_var = -1;
            for (int i = 0; i <= 40; ++i) {
                const CbpkfUpdate u =
                    cbpkf_step(scalar_prior(0, 1.0), Eigen::VectorXd::Zero(1), scalar_model(1, r), 0.05 * i, form);
                ASSERT_GT(u.gain(0, 0), prev_gain);
                ASSERT_GE(u.posterior.cov(0, 0), prev_var - 1e-14);
                prev_gain = u.gain(0, 0);
                prev_var = u.posterior.cov(0, 0);
            }
        }
    }
}

TEST(CbpkfUpdate, AlphaZeroEqualsKf) {
    std::mt19937 g(22);
    CbPenaltyConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + trial % 5, n = 1 + trial % 10;
        const StateEstimate prior = random_prior(g, m);
        const SystemModel s = random_model(g, m, n);
        const Eigen::VectorXd z = random_matrix(g, n, 1);
        const UpdateResult kf = kf_update(prior, z, s);
        const CbpkfUpdate cb = cbpkf_update(prior, z, s, cfg);
        ASSERT_LT(rel_diff(cb.posterior.mean, kf.posterior.mean), 1e-10);
        ASSERT_LT(rel_diff(cb.posterior.cov, kf.posterior.cov), 1e-10);
        ASSERT_EQ(cb.alpha_used, 0.0);
    }
}

TEST(CbpkfUpdate, ReductionFollowsGeometricRule) {
    // Case 1 with C₁ = H at α = 0.7 violates the covariance check on many steps.
    CaseParams c = reference_case(1);
    c.n_cycles = 400;
    c.seed = 5;
    const Trajectory t = simulate(c);
    CbPenaltyConfig cfg;
    cfg.alpha = 0.7;
    cfg.c1_form = CbGainForm::kLinearized;
    StateEstimate post = initial_estimate(c);
    int reduced_steps = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        const StateEstimate prior = kf_predict(post, t.models[k]);
        const CbpkfUpdate u = cbpkf_update(prior, t.observations[k], t.models[k], cfg);
        const double tol = default_psd_tol(prior.cov);
        ASSERT_TRUE((u.posterior.cov.diagonal() - prior.cov.diagonal()).maxCoeff() <= tol);
        if (u.reductions > 0 && u.alpha_used > 0.0) {
            ++reduced_steps;
            ASSERT_DOUBLE_EQ(u.alpha_used, 0.7 * std::pow(0.5, u.reductions));
            const double rejected = u.alpha_used / 0.5;
            const CbpkfUpdate before =
                cbpkf_step(prior, t.observations[k], t.models[k], rejected, CbGainForm::kLinearized);
            ASSERT_GT((before.posterior.cov.diagonal() - prior.cov.diagonal()).maxCoeff(), tol);
        }
        post = u.posterior;
    }
    EXPECT_GT(reduced_steps, 0);
}

TEST(CbpkfUpdate, FallsBackToKf) {
    std::mt19937 g(23);
    const StateEstimate prior = random_prior(g, 2);
    const SystemModel s = random_model(g, 2, 3);
    const Eigen::VectorXd z = random_matrix(g, 3, 1);
    CbPenaltyConfig cfg;
    cfg.alpha = 1.0;
    cfg.max_iters = 2;
    cfg.psd_tol = -1.0;  // invalid, must be rejected
    EXPECT_THROW(cbpkf_update(prior, z, s, cfg), ConfigError);

    // A check nothing passes except the exact KF step.
    cfg.psd_tol = 0.0;
    cfg.check = CovarianceCheck::kPsd;
    SystemModel tight = s;
    const CbpkfUpdate u = cbpkf_update(prior, z, tight, cfg);
    if (u.alpha_used == 0.0) {
        const UpdateResult kf = kf_update(prior, z, tight);
        EXPECT_LT(rel_diff(u.posterior.cov, kf.posterior.cov), 1e-12);
        EXPECT_EQ(u.reductions, cfg.max_iters + 1);
    } else {
        EXPECT_TRUE(linalg::is_psd(prior.cov - u.posterior.cov, 0.0));
    }
}

TEST(CbpkfUpdate, ConfigValidation) {
    CbPenaltyConfig cfg;
    cfg.alpha = -0.1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.reduce_factor = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(CbpkfUpdate, ErrorNamesStep) {
    StateEstimate prior = scalar_prior(0, 1);
    prior.step = 17;
    SystemModel s = scalar_model(0.0, 0.0);  // singular innovation
    CbPenaltyConfig cfg;
    try {
        cbpkf_update(prior, Eigen::VectorXd::Zero(1), s, cfg);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("step 17"), std::string::npos);
    }
}
