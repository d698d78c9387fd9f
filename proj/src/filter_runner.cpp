#include "cbpkf/filter_runner.hpp"

#include "cbpkf/error.hpp"
#include "cbpkf/kalman.hpp"

#include <chrono>
#include <optional>

namespace cbpkf {

std::string to_string(MethodKind kind) {
    switch (kind) {
        case MethodKind::kKf: return "kf";
        case MethodKind::kCbpkf: return "cbpkf";
        case MethodKind::kVikf: return "vikf";
        case MethodKind::kAdaptive: return "adaptive";
    }
    return "unknown";
}

FilterRun run_filter(const Trajectory& traj, const MethodSpec& spec, const StateEstimate& initial) {
    const auto steps = static_cast<Eigen::Index>(traj.size());
    const Eigen::Index m = initial.dim();
    if (traj.models.size() != traj.size() || traj.observations.size() != traj.size()) {
        throw ConfigError("run_filter: trajectory sequences have different lengths");
    }
    switch (spec.kind) {
        case MethodKind::kCbpkf: spec.cbpkf.validate(); break;
        case MethodKind::kVikf: spec.vikf.validate(); break;
        case MethodKind::kAdaptive: spec.adaptive.validate(); break;
        case MethodKind::kKf: break;
    }

    FilterRun run;
    run.estimates.resize(steps, m);
    run.variances.resize(steps, m);
    run.alpha.resize(static_cast<std::size_t>(steps));

    GramInverseCache cache;
    StateEstimate post = initial;
    post.kind = EstimateKind::kPosterior;

    const auto start = std::chrono::steady_clock::now();
    for (Eigen::Index k = 0; k < steps; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        const SystemModel& model = traj.models[idx];
        const Eigen::VectorXd& z = traj.observations[idx];
        const StateEstimate prior = kf_predict(post, model);

        UpdateResult upd;
        switch (spec.kind) {
            case MethodKind::kKf: upd = kf_update(prior, z, model); break;
            case MethodKind::kCbpkf: upd = cbpkf_update(prior, z, model, spec.cbpkf, &cache); break;
            case MethodKind::kVikf: upd = vikf_update(prior, z, model, spec.vikf); break;
            case MethodKind::kAdaptive: {
                std::optional<Eigen::VectorXd> truth;
                if (spec.adaptive.mode == AdaptiveMode::kTruthOracle) truth = traj.truth[idx];
                upd = adaptive_filter_step(prior, z, model, spec.adaptive, truth, &cache);
                break;
            }
        }
        post = std::move(upd.posterior);
        run.estimates.row(k) = post.mean.transpose();
        run.variances.row(k) = post.cov.diagonal().transpose();
        run.alpha[idx] = upd.alpha_used;
        run.reductions += upd.reductions;
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

}  // namespace cbpkf
