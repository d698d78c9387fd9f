#pragma once

#include "cbpkf/rng.hpp"
#include "cbpkf/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cbpkf {

/// Whether (φ, σ_w, σ_v) are redrawn at every step or once per run.
enum class PerturbSchedule { kPerStep, kPerRun };

/// Which parameters the filters are handed in Trajectory::models.
enum class FilterModelSource { kPerturbed, kBase };

/// One experiment case: base parameters, the std of the noise added to each,
/// problem dimensions and seed.
struct CaseParams {
    int case_id = 0;
    double sigma_w = 0.1;
    double gamma_w = 0.0;
    double sigma_v = 1.5;
    double gamma_v = 0.0;
    double phi = 0.7;
    double gamma_phi = 0.0;
    int m = 1;
    int n = 10;
    std::int64_t n_cycles = 100000;
    std::uint64_t seed = 1;
    PerturbSchedule schedule = PerturbSchedule::kPerStep;
    FilterModelSource filter_model = FilterModelSource::kPerturbed;

    /// Throws ConfigError when an invariant is violated. Zero base noise
    /// levels are accepted (noise-free simulations); the filters reject a
    /// singular R on their own.
    void validate() const;

    /// Stationary variance σ_w² / (1 − φ²) of the unperturbed AR(1) process.
    double stationary_variance() const;

    /// Group of the 12 reference cases (1: cases 1-4, 2: 5-8, 3: 9-12); 0
    /// for custom cases.
    int group() const;
};

/// The 12 reference cases with m = 1, n = 10 and 10⁵ cycles. Seeds are
/// left at 0; callers derive them.
std::vector<CaseParams> reference_cases();

/// Reference case by 1-based id. Throws ConfigError when out of range.
CaseParams reference_case(int case_id);

struct PerturbedParams {
    double phi = 0.0;
    double sigma_w = 0.0;
    double sigma_v = 0.0;
};

inline constexpr double kPhiLower = 0.5;
inline constexpr double kPhiUpper = 0.95;
inline constexpr double kSigmaLower = 0.01;
inline constexpr std::int64_t kMaxRejectionDraws = 1'000'000;

/// Draws φᵖ, σ_wᵖ, σ_vᵖ by adding N(0, γ²) noise to the base values and
/// redrawing until φᵖ ∈ [0.5, 0.95], σ_wᵖ ≥ 0.01, σ_vᵖ ≥ 0.01. A parameter
/// whose γ is zero is returned unchanged and consumes no draws. Throws
/// NumericalError after 10⁶ rejected draws for one parameter.
PerturbedParams perturb_params(const CaseParams& base, Rng& rng);

/// Observation matrix: row i senses state component (i mod m) with unit
/// gain, i.e. identity blocks stacked n/m times when m divides n.
Eigen::MatrixXd observation_matrix(int n, int m);

/// Builds Φ = φ I, Q = σ_w² I, H, R = σ_v² I.
SystemModel make_model(int m, int n, double phi, double sigma_w, double sigma_v);

struct Trajectory {
    std::vector<Eigen::VectorXd> truth;         ///< X_1 .. X_N
    std::vector<Eigen::VectorXd> observations;  ///< Z_1 .. Z_N
    std::vector<SystemModel> models;            ///< model handed to filters at step k
    std::vector<PerturbedParams> params;        ///< parameters that generated step k
    Eigen::VectorXd initial_truth;              ///< X_0

    std::size_t size() const { return truth.size(); }
};

/// Runs the perturbed linear system for case.n_cycles steps. X_0 is drawn
/// from N(0, σ_w²/(1−φ²) I) unless `initial_state` is given. Identical
/// CaseParams give bit-identical trajectories.
Trajectory simulate(const CaseParams& c, const std::optional<Eigen::VectorXd>& initial_state = std::nullopt);

/// Filter starting point: zero mean, stationary covariance, posterior at step 0.
StateEstimate initial_estimate(const CaseParams& c);

/// CSV with columns k, x_1..x_m, z_1..z_n, phi_p, sigma_w_p, sigma_v_p.
void write_trajectory_csv(const Trajectory& t, const std::string& path);

}  // namespace cbpkf
