#include "cbpkf/adaptive.hpp"
#include "cbpkf/cbpkf.hpp"
#include "cbpkf/evaluation.hpp"
#include "cbpkf/filter_runner.hpp"
#include "cbpkf/kalman.hpp"
#include "cbpkf/system_sim.hpp"
#include "cbpkf/vikf.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cbpkf;

namespace {

py::dict trajectory_dict(const Trajectory& t) {
    const auto n_steps = static_cast<Eigen::Index>(t.size());
    const Eigen::Index n_obs = t.observations.empty() ? 0 : t.observations.front().size();
    Eigen::MatrixXd z(n_steps, n_obs);
    Eigen::VectorXd phi(n_steps), sw(n_steps), sv(n_steps);
    for (Eigen::Index k = 0; k < n_steps; ++k) {
        const auto i = static_cast<std::size_t>(k);
        z.row(k) = t.observations[i].transpose();
        phi(k) = t.params[i].phi;
        sw(k) = t.params[i].sigma_w;
        sv(k) = t.params[i].sigma_v;
    }
    py::dict d;
    d["truth"] = truth_matrix(t);
    d["observations"] = z;
    d["phi"] = phi;
    d["sigma_w"] = sw;
    d["sigma_v"] = sv;
    d["initial_truth"] = t.initial_truth;
    return d;
}

MethodSpec make_spec(const std::string& method, double alpha, double boost, std::optional<double> gamma,
                     int group) {
    MethodSpec s;
    s.id = method;
    if (method == "kf") {
        s.kind = MethodKind::kKf;
    } else if (method == "cbpkf") {
        s.kind = MethodKind::kCbpkf;
        s.cbpkf.alpha = alpha;
    } else if (method == "vikf") {
        s.kind = MethodKind::kVikf;
        s.vikf.alpha = alpha;
        s.vikf.alpha_boost = boost;
    } else if (method == "adaptive" || method == "oracle") {
        s.kind = MethodKind::kAdaptive;
        s.adaptive.mode = method == "adaptive" ? AdaptiveMode::kKfEstimate : AdaptiveMode::kTruthOracle;
        s.adaptive.gamma = gamma ? *gamma : default_gamma(group, s.adaptive.mode);
    } else {
        throw py::value_error("method must be kf, cbpkf, vikf, adaptive or oracle");
    }
    return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Conditional-bias-penalized Kalman filtering";

    py::enum_<PerturbSchedule>(m, "PerturbSchedule")
        .value("PER_STEP", PerturbSchedule::kPerStep)
        .value("PER_RUN", PerturbSchedule::kPerRun);
    py::enum_<FilterModelSource>(m, "FilterModelSource")
        .value("PERTURBED", FilterModelSource::kPerturbed)
        .value("BASE", FilterModelSource::kBase);
    py::enum_<CbGainForm>(m, "CbGainForm").value("FULL", CbGainForm::kFull).value("LINEARIZED", CbGainForm::kLinearized);
    py::enum_<Table1Method>(m, "Table1Method")
        .value("KF", Table1Method::kKf)
        .value("VIKF", Table1Method::kVikf)
        .value("CBPKF", Table1Method::kCbpkf);

    py::class_<CaseParams>(m, "CaseParams")
        .def(py::init<>())
        .def_readwrite("case_id", &CaseParams::case_id)
        .def_readwrite("sigma_w", &CaseParams::sigma_w)
        .def_readwrite("gamma_w", &CaseParams::gamma_w)
        .def_readwrite("sigma_v", &CaseParams::sigma_v)
        .def_readwrite("gamma_v", &CaseParams::gamma_v)
        .def_readwrite("phi", &CaseParams::phi)
        .def_readwrite("gamma_phi", &CaseParams::gamma_phi)
        .def_readwrite("m", &CaseParams::m)
        .def_readwrite("n", &CaseParams::n)
        .def_readwrite("n_cycles", &CaseParams::n_cycles)
        .def_readwrite("seed", &CaseParams::seed)
        .def_readwrite("schedule", &CaseParams::schedule)
        .def_readwrite("filter_model", &CaseParams::filter_model)
        .def("validate", &CaseParams::validate)
        .def("group", &CaseParams::group)
        .def("stationary_variance", &CaseParams::stationary_variance);

    py::class_<SystemModel>(m, "SystemModel")
        .def(py::init([](Eigen::MatrixXd phi, Eigen::MatrixXd q, Eigen::MatrixXd h, Eigen::MatrixXd r) {
                 SystemModel s{std::move(phi), std::move(q), std::move(h), std::move(r)};
                 s.validate_dims();
                 return s;
             }),
             py::arg("phi"), py::arg("q"), py::arg("h"), py::arg("r"))
        .def_readwrite("phi", &SystemModel::phi)
        .def_readwrite("q", &SystemModel::q)
        .def_readwrite("h", &SystemModel::h)
        .def_readwrite("r", &SystemModel::r);

    py::class_<StateEstimate>(m, "StateEstimate")
        .def(py::init([](Eigen::VectorXd mean, Eigen::MatrixXd cov, bool prior) {
                 StateEstimate e;
                 e.mean = std::move(mean);
                 e.cov = std::move(cov);
                 e.kind = prior ? EstimateKind::kPrior : EstimateKind::kPosterior;
                 return e;
             }),
             py::arg("mean"), py::arg("cov"), py::arg("prior") = false)
        .def_readwrite("mean", &StateEstimate::mean)
        .def_readwrite("cov", &StateEstimate::cov)
        .def_property_readonly("is_prior", [](const StateEstimate& e) { return e.kind == EstimateKind::kPrior; });

    py::class_<UpdateResult>(m, "UpdateResult")
        .def_readonly("posterior", &UpdateResult::posterior)
        .def_readonly("gain", &UpdateResult::gain)
        .def_readonly("apparent_cov", &UpdateResult::apparent_cov)
        .def_readonly("alpha_used", &UpdateResult::alpha_used)
        .def_readonly("reductions", &UpdateResult::reductions);

    py::class_<ScalarGain>(m, "ScalarGain")
        .def_readonly("gain", &ScalarGain::gain)
        .def_readonly("filtered_var", &ScalarGain::filtered_var);

    py::class_<BoostCalibration>(m, "BoostCalibration")
        .def_readonly("boost", &BoostCalibration::boost)
        .def_readonly("gap", &BoostCalibration::gap)
        .def_readonly("rmse_cbpkf", &BoostCalibration::rmse_cbpkf)
        .def_readonly("rmse_vikf", &BoostCalibration::rmse_vikf)
        .def_readonly("warning", &BoostCalibration::warning);

    m.def("reference_case", &reference_case, py::arg("case_id"));
    m.def("reference_cases", &reference_cases);
    m.def("make_model", &make_model, py::arg("m"), py::arg("n"), py::arg("phi"), py::arg("sigma_w"),
          py::arg("sigma_v"));
    m.def("initial_estimate", &initial_estimate, py::arg("case"));
    m.def(
        "simulate", [](const CaseParams& c) { return trajectory_dict(simulate(c)); }, py::arg("case"),
        "Simulate a case; returns a dict of numpy arrays.");

    m.def("kf_predict", &kf_predict, py::arg("posterior"), py::arg("model"));
    m.def("kf_update", &kf_update, py::arg("prior"), py::arg("z"), py::arg("model"));
    m.def(
        "cbpkf_update",
        [](const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model, double alpha,
           CbGainForm form) -> UpdateResult {
            CbPenaltyConfig cfg;
            cfg.alpha = alpha;
            cfg.c1_form = form;
            return cbpkf_update(prior, z, model, cfg);
        },
        py::arg("prior"), py::arg("z"), py::arg("model"), py::arg("alpha"), py::arg("form") = CbGainForm::kFull);
    m.def(
        "vikf_update",
        [](const StateEstimate& prior, const Eigen::VectorXd& z, const SystemModel& model, double alpha,
           double boost) {
            VikfConfig cfg;
            cfg.alpha = alpha;
            cfg.alpha_boost = boost;
            return vikf_update(prior, z, model, cfg);
        },
        py::arg("prior"), py::arg("z"), py::arg("model"), py::arg("alpha"), py::arg("boost") = 1.0);
    m.def("table1_closed_forms", &table1_closed_forms, py::arg("h"), py::arg("sigma_prior_sq"),
          py::arg("sigma_z_sq"), py::arg("alpha"), py::arg("method"));

    m.def(
        "run_filter",
        [](const CaseParams& c, const std::string& method, double alpha, double boost, std::optional<double> gamma) {
            const Trajectory traj = simulate(c);
            const FilterRun run =
                run_filter(traj, make_spec(method, alpha, boost, gamma, c.group()), initial_estimate(c));
            py::dict d = trajectory_dict(traj);
            d["estimates"] = run.estimates;
            d["variances"] = run.variances;
            d["alpha"] = run.alpha;
            d["reductions"] = run.reductions;
            return d;
        },
        py::arg("case"), py::arg("method"), py::arg("alpha") = 0.0, py::arg("boost") = 1.0,
        py::arg("gamma") = py::none(),
        "Simulate `case` and filter it; `method` is kf, cbpkf, vikf, adaptive or oracle.");

    m.def("make_thresholds",
          [](const Eigen::MatrixXd& truth, int count, double top) { return make_thresholds(truth, count, top); },
          py::arg("truth"), py::arg("count") = 21, py::arg("top_percentile") = 99.9);
    m.def(
        "conditional_rmse",
        [](const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est, const std::vector<double>& thresholds) {
            py::list out;
            for (const auto& r : conditional_rmse(truth, est, thresholds)) {
                out.append(py::make_tuple(r.threshold, r.rmse ? py::cast(*r.rmse) : py::none(), r.count));
            }
            return out;
        },
        py::arg("truth"), py::arg("est"), py::arg("thresholds"),
        "List of (threshold, rmse or None, count).");
    m.def("unconditional_rmse",
          py::overload_cast<const Eigen::MatrixXd&, const Eigen::MatrixXd&>(&unconditional_rmse), py::arg("truth"),
          py::arg("est"));
    m.def("percent_reduction", &percent_reduction, py::arg("rmse_ref"), py::arg("rmse_method"));
    m.def(
        "calibrate_boost",
        [](const CaseParams& c, double alpha) {
            CbPenaltyConfig cfg;
            cfg.alpha = alpha;
            return calibrate_boost(c, cfg);
        },
        py::arg("case"), py::arg("alpha"));
}
