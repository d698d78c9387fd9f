#pragma once

#include "cbpkf/types.hpp"

namespace cbpkf {

/// Time update: mean' = Φ mean, cov' = Φ cov Φᵀ + Q. Requires a posterior.
StateEstimate kf_predict(const StateEstimate& post, const SystemModel& model);

/// Measurement update with K = ΣHᵀ(HΣHᵀ + R)⁻¹ and the Joseph-form
/// covariance (I − KH)Σ(I − KH)ᵀ + KRKᵀ. Requires a prior.
UpdateResult kf_update(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model);

namespace detail {
void require_prior(const StateEstimate& e, const char* who);
void require_update_dims(const StateEstimate& prior, const Eigen::VectorXd& z,
                         const SystemModel& model, const char* who);
Eigen::MatrixXd joseph_cov(const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& gain,
                           const SystemModel& model);
}  // namespace detail

}  // namespace cbpkf
