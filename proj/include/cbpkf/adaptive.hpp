#pragma once

#include "cbpkf/cbpkf.hpp"
#include "cbpkf/types.hpp"
#include "cbpkf/vikf.hpp"

#include <optional>

namespace cbpkf {

enum class AdaptiveMode {
    kKfEstimate,   ///< α_k from the norm of the KF posterior at step k
    kTruthOracle,  ///< α_k from the norm of the true state (upper bound)
};

enum class AdaptiveUpdate { kCbpkf, kVikf };

/// α_k = min(γ‖ref‖, alpha_cap); ‖·‖ is |x| for m = 1 and Euclidean otherwise.
struct AdaptiveConfig {
    double gamma = 0.0;
    AdaptiveMode mode = AdaptiveMode::kKfEstimate;
    double alpha_cap = 2.0;
    AdaptiveUpdate update = AdaptiveUpdate::kCbpkf;
    /// Reduction settings and C₁ form; `alpha` is ignored.
    CbPenaltyConfig penalty;
    /// Used when update == kVikf; α' = vikf_boost · α_k.
    double vikf_boost = 1.0;

    void validate() const;
};

/// Proportionality constants for the three case groups (1-based group id).
double default_gamma(int group, AdaptiveMode mode);

double alpha_for_step(const Eigen::VectorXd& ref_state, const AdaptiveConfig& cfg);

/// KF-estimate mode: computes the KF posterior from `prior` (then discards
/// it), derives α_k, and runs the CB-penalized update from the same prior.
/// Truth-oracle mode: derives α_k from `truth_k`, which must be present; the
/// truth is read for nothing else.
UpdateResult adaptive_filter_step(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model,
                                  const AdaptiveConfig& cfg,
                                  const std::optional<Eigen::VectorXd>& truth_k = std::nullopt,
                                  GramInverseCache* cache = nullptr);

}  // namespace cbpkf
