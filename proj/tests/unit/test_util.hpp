#pragma once

#include "cbpkf/types.hpp"

#include <Eigen/Dense>

#include <random>

namespace testutil {

// Independent of the library RNG on purpose.
inline Eigen::MatrixXd random_matrix(std::mt19937& g, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::MatrixXd a(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) a(i, j) = nd(g);
    return a;
}

inline Eigen::MatrixXd random_spd(std::mt19937& g, Eigen::Index n, double ridge = 0.1) {
    const Eigen::MatrixXd a = random_matrix(g, n, n);
    return a * a.transpose() / static_cast<double>(n) + ridge * Eigen::MatrixXd::Identity(n, n);
}

inline cbpkf::SystemModel random_model(std::mt19937& g, Eigen::Index m, Eigen::Index n) {
    cbpkf::SystemModel s;
    s.phi = 0.8 * Eigen::MatrixXd::Identity(m, m) + 0.1 * random_matrix(g, m, m);
    s.q = random_spd(g, m, 0.05);
    s.h = random_matrix(g, n, m);
    s.r = random_spd(g, n, 0.2);
    return s;
}

inline cbpkf::StateEstimate random_prior(std::mt19937& g, Eigen::Index m) {
    cbpkf::StateEstimate e;
    e.mean = random_matrix(g, m, 1);
    e.cov = random_spd(g, m, 0.1);
    e.kind = cbpkf::EstimateKind::kPrior;
    return e;
}

inline cbpkf::SystemModel scalar_model(double h, double r) {
    cbpkf::SystemModel s;
    s.phi = Eigen::MatrixXd::Identity(1, 1);
    s.q = Eigen::MatrixXd::Zero(1, 1);
    s.h = Eigen::MatrixXd::Constant(1, 1, h);
    s.r = Eigen::MatrixXd::Constant(1, 1, r);
    return s;
}

inline cbpkf::StateEstimate scalar_prior(double mean, double var) {
    cbpkf::StateEstimate e;
    e.mean = Eigen::VectorXd::Constant(1, mean);
    e.cov = Eigen::MatrixXd::Constant(1, 1, var);
    e.kind = cbpkf::EstimateKind::kPrior;
    return e;
}

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(1.0, b.norm());
    return (a - b).norm() / scale;
}

}  // namespace testutil
