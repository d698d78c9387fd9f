#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string_view>
#include <vector>

namespace cbpkf::linalg {

/// (A + Aᵀ) / 2
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a);

/// Cholesky factorization of an SPD matrix. Throws NumericalError naming
/// `what` together with a reciprocal-condition estimate on failure.
Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& a, std::string_view what);

/// LU with partial pivoting for general square matrices. Throws
/// NumericalError when the reciprocal condition estimate drops below
/// `min_rcond`.
Eigen::PartialPivLU<Eigen::MatrixXd> factor_general(const Eigen::MatrixXd& a,
                                                    std::string_view what,
                                                    double min_rcond = 1e-13);

/// True when every eigenvalue of the symmetric part of `a` is >= -tol.
bool is_psd(const Eigen::MatrixXd& a, double tol);

/// Records the dimension of every factorization performed by the helpers
/// above on the current thread while the object is alive. Nesting is not
/// supported; the innermost log wins.
class FactorizationLog {
public:
    FactorizationLog();
    ~FactorizationLog();
    FactorizationLog(const FactorizationLog&) = delete;
    FactorizationLog& operator=(const FactorizationLog&) = delete;

    std::size_t total() const { return dims_.size(); }
    std::size_t count(Eigen::Index dim) const;
    const std::vector<Eigen::Index>& dims() const { return dims_; }

    void record(Eigen::Index dim) { dims_.push_back(dim); }

private:
    std::vector<Eigen::Index> dims_;
    FactorizationLog* previous_;
};

}  // namespace cbpkf::linalg
