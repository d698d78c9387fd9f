#include "cbpkf/system_sim.hpp"

#include "cbpkf/error.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cbpkf {
namespace {

double draw_bounded(double base, double gamma, double lo, double hi, Rng& rng,
                    const char* name) {
    if (gamma == 0.0) return base;
    for (std::int64_t i = 0; i < kMaxRejectionDraws; ++i) {
        const double v = base + gamma * rng.normal();
        if (v >= lo && v <= hi) return v;
    }
    std::ostringstream os;
    os << "perturb_params: no admissible draw for " << name << " after "
       << kMaxRejectionDraws << " attempts (base " << base << ", gamma " << gamma
       << "); configuration is degenerate";
    throw NumericalError(os.str());
}

}  // namespace

void CaseParams::validate() const {
    auto fail = [this](const std::string& msg) {
        throw ConfigError("case " + std::to_string(case_id) + ": " + msg);
    };
    if (!(sigma_w >= 0.0)) fail("sigma_w must be >= 0");
    if (!(sigma_v >= 0.0)) fail("sigma_v must be >= 0");
    if (!(phi > 0.0 && phi < 1.0)) fail("phi must lie in (0, 1)");
    if (!(gamma_w >= 0.0 && gamma_v >= 0.0 && gamma_phi >= 0.0)) fail("gamma_* must be >= 0");
    if (m < 1) fail("m must be >= 1");
    if (n < 1) fail("n must be >= 1");
    if (n_cycles < 1) fail("n_cycles must be >= 1");
}

double CaseParams::stationary_variance() const {
    return sigma_w * sigma_w / (1.0 - phi * phi);
}

int CaseParams::group() const {
    if (case_id >= 1 && case_id <= 12) return (case_id - 1) / 4 + 1;
    return 0;
}

std::vector<CaseParams> reference_cases() {
    // sigma_w, gamma_w, sigma_v, gamma_v, phi, gamma_phi
    static constexpr std::array<std::array<double, 6>, 12> rows{{
        {0.1, 0.01, 1.5, 0.4, 0.7, 0.1},
        {0.1, 0.01, 1.5, 0.4, 0.7, 0.8},
        {0.1, 0.01, 1.5, 1.2, 0.7, 0.1},
        {0.1, 0.01, 1.5, 1.2, 0.7, 0.8},
        {0.1, 0.1, 1.5, 0.4, 0.7, 0.1},
        {0.1, 0.1, 1.5, 0.4, 0.7, 0.8},
        {0.1, 0.1, 1.5, 1.2, 0.7, 0.1},
        {0.1, 0.1, 1.5, 1.2, 0.7, 0.8},
        {0.1, 0.2, 1.5, 0.4, 0.7, 0.1},
        {0.1, 0.2, 1.5, 0.4, 0.7, 0.8},
        {0.1, 0.2, 1.5, 1.2, 0.7, 0.1},
        {0.1, 0.2, 1.5, 1.2, 0.7, 0.8},
    }};
    std::vector<CaseParams> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CaseParams c;
        c.case_id = static_cast<int>(i) + 1;
        c.sigma_w = rows[i][0];
        c.gamma_w = rows[i][1];
        c.sigma_v = rows[i][2];
        c.gamma_v = rows[i][3];
        c.phi = rows[i][4];
        c.gamma_phi = rows[i][5];
        c.m = 1;
        c.n = 10;
        c.n_cycles = 100000;
        c.seed = 0;
        out.push_back(c);
    }
    return out;
}

CaseParams reference_case(int case_id) {
    if (case_id < 1 || case_id > 12) {
        throw ConfigError("reference case id must be in 1..12, got " + std::to_string(case_id));
    }
    return reference_cases()[static_cast<std::size_t>(case_id - 1)];
}

PerturbedParams perturb_params(const CaseParams& base, Rng& rng) {
    PerturbedParams p;
    p.phi = draw_bounded(base.phi, base.gamma_phi, kPhiLower, kPhiUpper, rng, "phi");
    p.sigma_w = draw_bounded(base.sigma_w, base.gamma_w, kSigmaLower, HUGE_VAL, rng, "sigma_w");
    p.sigma_v = draw_bounded(base.sigma_v, base.gamma_v, kSigmaLower, HUGE_VAL, rng, "sigma_v");
    return p;
}

Eigen::MatrixXd observation_matrix(int n, int m) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, m);
    for (int i = 0; i < n; ++i) h(i, i % m) = 1.0;
    return h;
}

SystemModel make_model(int m, int n, double phi, double sigma_w, double sigma_v) {
    SystemModel model;
    model.phi = phi * Eigen::MatrixXd::Identity(m, m);
    model.q = sigma_w * sigma_w * Eigen::MatrixXd::Identity(m, m);
    model.h = observation_matrix(n, m);
    model.r = sigma_v * sigma_v * Eigen::MatrixXd::Identity(n, n);
    return model;
}

Trajectory simulate(const CaseParams& c, const std::optional<Eigen::VectorXd>& initial_state) {
    c.validate();
    Rng rng(c.seed);
    const auto steps = static_cast<std::size_t>(c.n_cycles);

    Trajectory t;
    t.truth.reserve(steps);
    t.observations.reserve(steps);
    t.models.reserve(steps);
    t.params.reserve(steps);

    if (initial_state) {
        if (initial_state->size() != c.m) throw ConfigError("simulate: initial state has wrong dimension");
        t.initial_truth = *initial_state;
    } else {
        const double sd = std::sqrt(c.stationary_variance());
        t.initial_truth.resize(c.m);
        for (int j = 0; j < c.m; ++j) t.initial_truth(j) = sd * rng.normal();
    }

    const SystemModel base_model = make_model(c.m, c.n, c.phi, c.sigma_w, c.sigma_v);
    const Eigen::MatrixXd h = base_model.h;

    PerturbedParams p{c.phi, c.sigma_w, c.sigma_v};
    if (c.schedule == PerturbSchedule::kPerRun) p = perturb_params(c, rng);

    Eigen::VectorXd x = t.initial_truth;
    Eigen::VectorXd noise_w(c.m);
    Eigen::VectorXd noise_v(c.n);
    for (std::size_t k = 0; k < steps; ++k) {
        if (c.schedule == PerturbSchedule::kPerStep) p = perturb_params(c, rng);
        for (int j = 0; j < c.m; ++j) noise_w(j) = p.sigma_w * rng.normal();
        x = p.phi * x + noise_w;
        for (int i = 0; i < c.n; ++i) noise_v(i) = p.sigma_v * rng.normal();

        t.truth.push_back(x);
        t.observations.push_back(h * x + noise_v);
        t.params.push_back(p);
        if (c.filter_model == FilterModelSource::kPerturbed) {
            t.models.push_back(make_model(c.m, c.n, p.phi, p.sigma_w, p.sigma_v));
        } else {
            t.models.push_back(base_model);
        }
    }
    return t;
}

StateEstimate initial_estimate(const CaseParams& c) {
    StateEstimate e;
    e.mean = Eigen::VectorXd::Zero(c.m);
    e.cov = c.stationary_variance() * Eigen::MatrixXd::Identity(c.m, c.m);
    e.kind = EstimateKind::kPosterior;
    e.step = 0;
    return e;
}

void write_trajectory_csv(const Trajectory& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    const Eigen::Index m = t.truth.empty() ? 0 : t.truth.front().size();
    const Eigen::Index n = t.observations.empty() ? 0 : t.observations.front().size();
    out << "k";
    for (Eigen::Index j = 1; j <= m; ++j) out << ",x_" << j;
    for (Eigen::Index i = 1; i <= n; ++i) out << ",z_" << i;
    out << ",phi_p,sigma_w_p,sigma_v_p\n";
    out << std::setprecision(17);
    for (std::size_t k = 0; k < t.size(); ++k) {
        out << (k + 1);
        for (Eigen::Index j = 0; j < m; ++j) out << ',' << t.truth[k](j);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << t.observations[k](i);
        out << ',' << t.params[k].phi << ',' << t.params[k].sigma_w << ',' << t.params[k].sigma_v << '\n';
    }
}

}  // namespace cbpkf
