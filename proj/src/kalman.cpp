#include "cbpkf/kalman.hpp"

#include "cbpkf/error.hpp"
#include "cbpkf/linalg.hpp"

#include <sstream>

namespace cbpkf {

void SystemModel::validate_dims() const {
    const Eigen::Index m = phi.rows();
    const Eigen::Index n = h.rows();
    std::ostringstream os;
    if (phi.cols() != m) os << "phi is not square; ";
    if (q.rows() != m || q.cols() != m) os << "q must be " << m << "x" << m << "; ";
    if (h.cols() != m) os << "h must have " << m << " columns; ";
    if (r.rows() != n || r.cols() != n) os << "r must be " << n << "x" << n << "; ";
    if (m == 0 || n == 0) os << "empty model; ";
    const std::string msg = os.str();
    if (!msg.empty()) throw ConfigError("SystemModel dimension mismatch: " + msg);
}

namespace detail {

void require_prior(const StateEstimate& e, const char* who) {
    if (e.kind != EstimateKind::kPrior) {
        throw ConfigError(std::string(who) + ": expected a prior (predicted) estimate");
    }
}

void require_update_dims(const StateEstimate& prior, const Eigen::VectorXd& z,
                         const SystemModel& model, const char* who) {
    model.validate_dims();
    if (prior.mean.size() != model.state_dim() || prior.cov.rows() != model.state_dim() ||
        prior.cov.cols() != model.state_dim()) {
        throw ConfigError(std::string(who) + ": estimate dimension does not match model");
    }
    if (z.size() != model.obs_dim()) {
        throw ConfigError(std::string(who) + ": observation vector has " + std::to_string(z.size()) +
                          " entries, model expects " + std::to_string(model.obs_dim()));
    }
}

Eigen::MatrixXd joseph_cov(const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& gain,
                           const SystemModel& model) {
    const Eigen::Index m = prior_cov.rows();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - gain * model.h;
    return linalg::symmetrize(a * prior_cov * a.transpose() + gain * model.r * gain.transpose());
}

}  // namespace detail

StateEstimate kf_predict(const StateEstimate& post, const SystemModel& model) {
    if (post.kind != EstimateKind::kPosterior) {
        throw ConfigError("kf_predict: expected a posterior (filtered) estimate");
    }
    model.validate_dims();
    if (post.mean.size() != model.state_dim() || post.cov.rows() != model.state_dim()) {
        throw ConfigError("kf_predict: estimate dimension does not match model");
    }
    StateEstimate prior;
    prior.mean = model.phi * post.mean;
    prior.cov = linalg::symmetrize(model.phi * post.cov * model.phi.transpose() + model.q);
    prior.kind = EstimateKind::kPrior;
    prior.step = post.step + 1;
    return prior;
}

UpdateResult kf_update(const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model) {
    detail::require_prior(prior, "kf_update");
    detail::require_update_dims(prior, z, model, "kf_update");

    const Eigen::MatrixXd sht = prior.cov * model.h.transpose();  // m x n
    const Eigen::MatrixXd innovation_cov = linalg::symmetrize(model.h * sht + model.r);
    const auto llt = linalg::factor_spd(innovation_cov, "kf_update: innovation covariance HΣHᵀ+R");
    // K = ΣHᵀ S⁻¹  <=>  Kᵀ = S⁻¹ HΣ
    const Eigen::MatrixXd gain = llt.solve(sht.transpose()).transpose();

    UpdateResult out;
    out.posterior.mean = prior.mean + gain * (z - model.h * prior.mean);
    out.posterior.cov = detail::joseph_cov(prior.cov, gain, model);
    out.posterior.kind = EstimateKind::kPosterior;
    out.posterior.step = prior.step;
    out.gain = gain;
    out.apparent_cov = out.posterior.cov;
    out.alpha_used = 0.0;
    return out;
}

}  // namespace cbpkf
