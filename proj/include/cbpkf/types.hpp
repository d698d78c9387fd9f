#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace cbpkf {

/// Linear dynamical and observation model for one step:
///   X_k = Φ X_{k-1} + W,  W ~ N(0, Q)
///   Z_k = H X_k + V,      V ~ N(0, R)
struct SystemModel {
    Eigen::MatrixXd phi;  ///< m x m state transition
    Eigen::MatrixXd q;    ///< m x m model-error covariance
    Eigen::MatrixXd h;    ///< n x m observation matrix
    Eigen::MatrixXd r;    ///< n x n observation-error covariance

    Eigen::Index state_dim() const { return phi.rows(); }
    Eigen::Index obs_dim() const { return h.rows(); }

    /// Throws ConfigError if the four blocks are not mutually consistent.
    void validate_dims() const;
};

enum class EstimateKind { kPrior, kPosterior };

struct StateEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    EstimateKind kind = EstimateKind::kPosterior;
    std::int64_t step = 0;

    Eigen::Index dim() const { return mean.size(); }
};

/// Result common to every update flavour.
struct UpdateResult {
    StateEstimate posterior;
    Eigen::MatrixXd gain;          ///< m x n
    Eigen::MatrixXd apparent_cov;  ///< equals posterior.cov for the plain KF
    double alpha_used = 0.0;
    int reductions = 0;            ///< number of α reductions applied
};

}  // namespace cbpkf
