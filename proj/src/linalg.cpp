#include "cbpkf/linalg.hpp"

#include "cbpkf/error.hpp"

#include <algorithm>
#include <sstream>

namespace cbpkf::linalg {
namespace {

thread_local FactorizationLog* active_log = nullptr;

void note(Eigen::Index dim) {
    if (active_log != nullptr) active_log->record(dim);
}

}  // namespace

FactorizationLog::FactorizationLog() : previous_(active_log) { active_log = this; }

FactorizationLog::~FactorizationLog() { active_log = previous_; }

std::size_t FactorizationLog::count(Eigen::Index dim) const {
    return static_cast<std::size_t>(std::count(dims_.begin(), dims_.end(), dim));
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
    return 0.5 * (a + a.transpose());
}

Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& a, std::string_view what) {
    note(a.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << what << ": matrix (" << a.rows() << "x" << a.cols()
           << ") is not positive definite";
        // LU gives a usable condition estimate even when Cholesky fails.
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
        os << " (rcond ~ " << lu.rcond() << ")";
        throw NumericalError(os.str());
    }
    return llt;
}

Eigen::PartialPivLU<Eigen::MatrixXd> factor_general(const Eigen::MatrixXd& a,
                                                    std::string_view what,
                                                    double min_rcond) {
    note(a.rows());
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const double rc = lu.rcond();
    if (!(rc >= min_rcond)) {
        std::ostringstream os;
        os << what << ": matrix (" << a.rows() << "x" << a.cols()
           << ") is singular to working precision (rcond ~ " << rc << ")";
        throw NumericalError(os.str());
    }
    return lu;
}

bool is_psd(const Eigen::MatrixXd& a, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace cbpkf::linalg
