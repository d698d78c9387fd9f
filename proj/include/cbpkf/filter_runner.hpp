#pragma once

#include "cbpkf/adaptive.hpp"
#include "cbpkf/cbpkf.hpp"
#include "cbpkf/system_sim.hpp"
#include "cbpkf/vikf.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace cbpkf {

enum class MethodKind { kKf, kCbpkf, kVikf, kAdaptive };

struct MethodSpec {
    std::string id;
    MethodKind kind = MethodKind::kKf;
    CbPenaltyConfig cbpkf;
    VikfConfig vikf;
    AdaptiveConfig adaptive;
};

/// Filtered output of one method over a trajectory. Row k holds step k + 1.
struct FilterRun {
    Eigen::MatrixXd estimates;  ///< N x m posterior means
    Eigen::MatrixXd variances;  ///< N x m posterior variances (diagonal)
    std::vector<double> alpha;  ///< α actually used per step
    std::int64_t reductions = 0;
    double seconds = 0.0;       ///< wall-clock time of the predict/update loop
};

/// Runs predict + update for every step of `traj`, starting from `initial`.
FilterRun run_filter(const Trajectory& traj, const MethodSpec& spec, const StateEstimate& initial);

std::string to_string(MethodKind kind);

}  // namespace cbpkf
