#include "cbpkf/adaptive.hpp"

#include "cbpkf/error.hpp"
#include "cbpkf/kalman.hpp"

#include <algorithm>
#include <cmath>

namespace cbpkf {

void AdaptiveConfig::validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("AdaptiveConfig: gamma must be >= 0");
    if (!(alpha_cap > 0.0)) throw ConfigError("AdaptiveConfig: alpha_cap must be > 0");
    if (!(vikf_boost > 0.0)) throw ConfigError("AdaptiveConfig: vikf_boost must be > 0");
    CbPenaltyConfig p = penalty;
    p.alpha = 0.0;
    p.validate();
}

double default_gamma(int group, AdaptiveMode mode) {
    if (group < 1 || group > 3) throw ConfigError("default_gamma: group must be 1, 2 or 3");
    static constexpr double kOperational[] = {3.0, 1.0, 0.5};
    static constexpr double kOracle[] = {3.0, 1.5, 1.0};
    return mode == AdaptiveMode::kKfEstimate ? kOperational[group - 1] : kOracle[group - 1];
}

double alpha_for_step(const Eigen::VectorXd& ref_state, const AdaptiveConfig& cfg) {
    const double norm = ref_state.size() == 1 ? std::abs(ref_state(0)) : ref_state.norm();
    return std::min(cfg.gamma * norm, cfg.alpha_cap);
}

UpdateResult adaptive_filter_step(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                                  const AdaptiveConfig& cfg, const std::optional<Eigen::VectorXd>& truth_k,
                                  GramInverseCache* cache) {
    cfg.validate();
    double alpha = 0.0;
    if (cfg.mode == AdaptiveMode::kTruthOracle) {
        if (!truth_k) throw ConfigError("adaptive_filter_step: truth-oracle mode needs the true state");
        if (truth_k->size() != prior.dim()) throw ConfigError("adaptive_filter_step: truth has wrong dimension");
        alpha = alpha_for_step(*truth_k, cfg);
    } else {
        if (truth_k) throw ConfigError("adaptive_filter_step: KF-estimate mode must not be given the truth");
        if (cfg.gamma == 0.0) return kf_update(prior, z, model);
        const UpdateResult kf = kf_update(prior, z, model);
        alpha = alpha_for_step(kf.posterior.mean, cfg);
    }

    if (cfg.update == AdaptiveUpdate::kVikf) {
        VikfConfig v;
        v.alpha = alpha;
        v.alpha_boost = cfg.vikf_boost;
        v.reduce_factor = cfg.penalty.reduce_factor;
        v.max_iters = cfg.penalty.max_iters;
        v.psd_tol = cfg.penalty.psd_tol;
        v.check = cfg.penalty.check;
        return vikf_update(prior, z, model, v);
    }
    CbPenaltyConfig p = cfg.penalty;
    p.alpha = alpha;
    return cbpkf_update(prior, z, model, p, cache);
}

}  // namespace cbpkf
