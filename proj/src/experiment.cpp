#include "cbpkf/experiment.hpp"

#include "cbpkf/error.hpp"
#include "cbpkf/rng.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace cbpkf {
namespace fs = std::filesystem;
using nlohmann::json;

#ifndef CBPKF_VERSION
#define CBPKF_VERSION "0.0.0"
#endif

namespace {

constexpr std::uint64_t kTimingStream = 1'000'000;

std::string kind_name(MethodKind k) { return to_string(k); }

MethodKind parse_kind(const std::string& s) {
    if (s == "kf") return MethodKind::kKf;
    if (s == "cbpkf") return MethodKind::kCbpkf;
    if (s == "vikf") return MethodKind::kVikf;
    if (s == "adaptive") return MethodKind::kAdaptive;
    throw ConfigError("unknown method kind '" + s + "'");
}

std::string alpha_label(double a) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", a);
    return buf;
}

std::string case_dir_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "case_%02d", id);
    return buf;
}

// ---- JSON conversion ------------------------------------------------------

json case_to_json(const CaseParams& c) {
    return json{{"case_id", c.case_id},
                {"sigma_w", c.sigma_w},
                {"gamma_w", c.gamma_w},
                {"sigma_v", c.sigma_v},
                {"gamma_v", c.gamma_v},
                {"phi", c.phi},
                {"gamma_phi", c.gamma_phi},
                {"m", c.m},
                {"n", c.n},
                {"n_cycles", c.n_cycles},
                {"seed", c.seed},
                {"schedule", c.schedule == PerturbSchedule::kPerStep ? "per_step" : "per_run"},
                {"filter_model", c.filter_model == FilterModelSource::kPerturbed ? "perturbed" : "base"}};
}

CaseParams case_from_json(const json& j) {
    if (j.is_number_integer()) return reference_case(j.get<int>());
    if (!j.is_object()) throw ConfigError("case entries must be integers or objects");
    CaseParams c;
    if (j.contains("base")) c = reference_case(j.at("base").get<int>());
    c.case_id = j.value("case_id", c.case_id);
    c.sigma_w = j.value("sigma_w", c.sigma_w);
    c.gamma_w = j.value("gamma_w", c.gamma_w);
    c.sigma_v = j.value("sigma_v", c.sigma_v);
    c.gamma_v = j.value("gamma_v", c.gamma_v);
    c.phi = j.value("phi", c.phi);
    c.gamma_phi = j.value("gamma_phi", c.gamma_phi);
    c.m = j.value("m", c.m);
    c.n = j.value("n", c.n);
    c.n_cycles = j.value("n_cycles", c.n_cycles);
    if (j.contains("schedule")) {
        const auto s = j.at("schedule").get<std::string>();
        if (s == "per_step") c.schedule = PerturbSchedule::kPerStep;
        else if (s == "per_run") c.schedule = PerturbSchedule::kPerRun;
        else throw ConfigError("schedule must be per_step or per_run");
    }
    if (j.contains("filter_model")) {
        const auto s = j.at("filter_model").get<std::string>();
        if (s == "perturbed") c.filter_model = FilterModelSource::kPerturbed;
        else if (s == "base") c.filter_model = FilterModelSource::kBase;
        else throw ConfigError("filter_model must be perturbed or base");
    }
    return c;
}

json method_to_json(const MethodPlan& m) {
    json j{{"id", m.id}, {"kind", kind_name(m.kind)}};
    switch (m.kind) {
        case MethodKind::kKf: break;
        case MethodKind::kCbpkf:
        case MethodKind::kVikf:
            if (m.alpha_grid) j["alpha"] = "grid";
            else if (m.alpha) j["alpha"] = *m.alpha;
            else j["alpha"] = "group";
            if (m.kind == MethodKind::kCbpkf) {
                j["gain_form"] = m.c1_form == CbGainForm::kFull ? "full" : "linearized";
            } else {
                j["boost"] = m.boost ? json(*m.boost) : json("calibrate");
            }
            break;
        case MethodKind::kAdaptive:
            j["mode"] = m.mode == AdaptiveMode::kKfEstimate ? "kf_estimate" : "truth_oracle";
            j["gamma"] = m.gamma ? json(*m.gamma) : json("group");
            j["alpha_cap"] = m.alpha_cap;
            j["update"] = m.update == AdaptiveUpdate::kCbpkf ? "cbpkf" : "vikf";
            j["vikf_boost"] = m.vikf_boost;
            j["gain_form"] = m.c1_form == CbGainForm::kFull ? "full" : "linearized";
            break;
    }
    return j;
}

MethodPlan method_from_json(const json& j) {
    MethodPlan m;
    m.id = j.at("id").get<std::string>();
    m.kind = parse_kind(j.value("kind", m.id));
    if (j.contains("alpha")) {
        const auto& a = j.at("alpha");
        if (a.is_string()) {
            const auto s = a.get<std::string>();
            if (s == "grid") m.alpha_grid = true;
            else if (s != "group") throw ConfigError("alpha must be a number, \"group\" or \"grid\"");
        } else {
            m.alpha = a.get<double>();
        }
    }
    if (j.contains("gain_form")) {
        const auto s = j.at("gain_form").get<std::string>();
        if (s == "full") m.c1_form = CbGainForm::kFull;
        else if (s == "linearized") m.c1_form = CbGainForm::kLinearized;
        else throw ConfigError("gain_form must be full or linearized");
    }
    if (j.contains("boost")) {
        const auto& b = j.at("boost");
        if (b.is_string()) {
            if (b.get<std::string>() != "calibrate") throw ConfigError("boost must be a number or \"calibrate\"");
        } else {
            m.boost = b.get<double>();
        }
    }
    if (j.contains("mode")) {
        const auto s = j.at("mode").get<std::string>();
        if (s == "kf_estimate") m.mode = AdaptiveMode::kKfEstimate;
        else if (s == "truth_oracle") m.mode = AdaptiveMode::kTruthOracle;
        else throw ConfigError("mode must be kf_estimate or truth_oracle");
    }
    if (j.contains("gamma")) {
        const auto& g = j.at("gamma");
        if (g.is_string()) {
            if (g.get<std::string>() != "group") throw ConfigError("gamma must be a number or \"group\"");
        } else {
            m.gamma = g.get<double>();
        }
    }
    m.alpha_cap = j.value("alpha_cap", m.alpha_cap);
    if (j.contains("update")) {
        const auto s = j.at("update").get<std::string>();
        if (s == "cbpkf") m.update = AdaptiveUpdate::kCbpkf;
        else if (s == "vikf") m.update = AdaptiveUpdate::kVikf;
        else throw ConfigError("update must be cbpkf or vikf");
    }
    m.vikf_boost = j.value("vikf_boost", m.vikf_boost);
    return m;
}

json timing_to_json(const TimingPlan& t) {
    json dims = json::array();
    for (const auto& [m, n] : t.dims) dims.push_back(std::to_string(m) + "x" + std::to_string(n));
    return json{{"dims", dims},
                {"n_cycles", t.n_cycles},
                {"repeats", t.repeats},
                {"alpha", t.alpha},
                {"vikf_boost", t.vikf_boost}};
}

TimingPlan timing_from_json(const json& j, const TimingPlan& defaults) {
    TimingPlan t = defaults;
    if (j.contains("dims")) {
        t.dims.clear();
        for (const auto& d : j.at("dims")) t.dims.push_back(parse_dims(d.get<std::string>()));
    }
    t.n_cycles = j.value("n_cycles", t.n_cycles);
    t.repeats = j.value("repeats", t.repeats);
    t.alpha = j.value("alpha", t.alpha);
    t.vikf_boost = j.value("vikf_boost", t.vikf_boost);
    return t;
}

json tail_to_json(const std::optional<TailReduction>& t) {
    if (!t) return nullptr;
    return json{{"threshold", t->threshold},
                {"count", t->count},
                {"rmse_kf", t->rmse_kf},
                {"rmse_method", t->rmse_method},
                {"percent", t->percent}};
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot open " + p.string() + " for writing");
    out << j.dump(2) << '\n';
}

// ---- one case -------------------------------------------------------------

json run_case(const ExperimentPlan& plan, CaseParams c, const fs::path& dir, std::ostream& log,
              std::mutex& log_mutex) {
    c.seed = case_seed(plan.master_seed, c.case_id);
    c.validate();
    fs::create_directories(dir);

    const Trajectory traj = simulate(c);
    const StateEstimate init = initial_estimate(c);
    std::vector<MethodSpec> specs = resolve_methods(plan, c);

    json methods = json::object();
    json boosts = json::object();
    // Boosts are calibrated before any run so the VIKF spec is complete.
    std::set<std::string> to_calibrate;
    for (const auto& mp : plan.methods) {
        if (mp.kind != MethodKind::kVikf || mp.boost) continue;
        if (!mp.alpha_grid) to_calibrate.insert(mp.id);
        else for (double a : plan.alpha_grid) to_calibrate.insert(mp.id + "_a" + alpha_label(a));
    }
    {
        for (auto& s : specs) {
            if (s.kind != MethodKind::kVikf || !to_calibrate.count(s.id)) continue;
            CbPenaltyConfig cfg;
            cfg.alpha = s.vikf.alpha;
            const BoostCalibration cal = calibrate_boost(c, cfg, BoostSearchOptions{}, plan.burn_in);
            s.vikf.alpha_boost = cal.boost;
            boosts[s.id] = json{{"boost", cal.boost},
                                {"gap", cal.gap},
                                {"rmse_cbpkf", cal.rmse_cbpkf},
                                {"rmse_vikf", cal.rmse_vikf},
                                {"evaluations", cal.evaluations},
                                {"warning", cal.warning ? json(*cal.warning) : json(nullptr)}};
        }
    }

    MethodSpec kf_spec;
    kf_spec.id = "kf";
    const FilterRun kf = run_filter(traj, kf_spec, init);

    RunReport kf_report = make_run_report(c, traj, kf, kf, "kf", plan.burn_in);
    const auto thresholds = make_thresholds(kf_report.truth, plan.n_thresholds, plan.top_percentile, plan.tail_mode);
    const auto kf_cond = conditional_rmse(kf_report.truth, kf_report.kf_est, thresholds, plan.tail_mode);
    const double kf_rmse = unconditional_rmse(kf_report.truth, kf_report.kf_est);

    for (const auto& spec : specs) {
        const FilterRun run = spec.kind == MethodKind::kKf ? kf : run_filter(traj, spec, init);
        const RunReport rep = make_run_report(c, traj, kf, run, spec.id, plan.burn_in);
        const auto cond = conditional_rmse(rep.truth, rep.method_est, thresholds, plan.tail_mode);
        const auto bins = variance_calibration(rep.method_est, rep.truth, rep.method_var, plan.calibration_bins);
        const fs::path mdir = dir / spec.id;
        fs::create_directories(mdir);
        write_conditional_rmse_csv((mdir / "conditional_rmse.csv").string(), kf_cond, cond);
        write_variance_calibration_csv((mdir / "variance_calibration.csv").string(), bins);
        if (plan.write_scatter) write_scatter_csv((mdir / "scatter.csv").string(), rep);

        const double rmse = unconditional_rmse(rep.truth, rep.method_est);
        json entry{{"kind", kind_name(spec.kind)},
                   {"unconditional_rmse", rmse},
                   {"kf_unconditional_rmse", kf_rmse},
                   {"unconditional_change_percent", 100.0 * (rmse - kf_rmse) / kf_rmse},
                   {"tail", tail_to_json(tail_reduction(kf_cond, cond))},
                   {"seconds", run.seconds},
                   {"time_ratio", kf.seconds > 0.0 ? run.seconds / kf.seconds : 0.0},
                   {"reductions", run.reductions}};
        if (bins.size() >= 2) entry["calibration_slope"] = calibration_fit(bins).slope;
        switch (spec.kind) {
            case MethodKind::kCbpkf: entry["alpha"] = spec.cbpkf.alpha; break;
            case MethodKind::kVikf:
                entry["alpha"] = spec.vikf.alpha;
                entry["boost"] = spec.vikf.alpha_boost;
                if (boosts.contains(spec.id)) entry["calibration"] = boosts[spec.id];
                break;
            case MethodKind::kAdaptive: entry["gamma"] = spec.adaptive.gamma; break;
            case MethodKind::kKf: break;
        }
        entry["files"] = json::array({spec.id + "/conditional_rmse.csv", spec.id + "/variance_calibration.csv"});
        if (plan.write_scatter) entry["files"].push_back(spec.id + "/scatter.csv");
        methods[spec.id] = entry;
        {
            std::lock_guard lock(log_mutex);
            log << "case " << c.case_id << ' ' << spec.id << " done\n";
        }
    }

    json summary{{"case", case_to_json(c)}, {"methods", methods}};
    write_json(dir / "summary.json", summary);
    return summary;
}

}  // namespace

// ---- plan ---------------------------------------------------------------------

double group_alpha(int group) {
    static constexpr double kAlpha[] = {0.7, 0.6, 0.5};
    if (group < 1 || group > 3) throw ConfigError("group_alpha: custom cases need an explicit alpha");
    return kAlpha[group - 1];
}

void ExperimentPlan::validate() const {
    if (cases.empty()) throw ConfigError("plan has no cases");
    std::set<int> case_ids;
    for (const auto& c : cases) {
        c.validate();
        if (!case_ids.insert(c.case_id).second) throw ConfigError("duplicate case id " + std::to_string(c.case_id));
    }
    std::set<std::string> ids;
    for (const auto& m : methods) {
        if (m.id.empty()) throw ConfigError("method with empty id");
        if (!ids.insert(m.id).second) throw ConfigError("duplicate method id '" + m.id + "'");
        if (m.alpha && !(*m.alpha >= 0.0)) throw ConfigError("method '" + m.id + "': alpha must be >= 0");
        if (m.boost && !(*m.boost > 0.0)) throw ConfigError("method '" + m.id + "': boost must be > 0");
        if (m.gamma && !(*m.gamma >= 0.0)) throw ConfigError("method '" + m.id + "': gamma must be >= 0");
        if (m.alpha_grid && alpha_grid.empty()) throw ConfigError("method '" + m.id + "' uses an empty alpha grid");
    }
    for (double a : alpha_grid) {
        if (!(a >= 0.0)) throw ConfigError("alpha_grid values must be >= 0");
    }
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (burn_in < 0) throw ConfigError("burn_in must be >= 0");
    if (n_thresholds < 2) throw ConfigError("n_thresholds must be >= 2");
    if (calibration_bins < 2) throw ConfigError("calibration_bins must be >= 2");
    if (output_dir.empty()) throw ConfigError("output_dir is empty");
    if (timing) {
        if (timing->n_cycles < 1 || timing->repeats < 1) throw ConfigError("timing: n_cycles and repeats must be >= 1");
        for (const auto& [m, n] : timing->dims) {
            if (m < 1 || n < 1) throw ConfigError("timing: dims must be positive");
        }
    }
}

ExperimentPlan default_plan() {
    ExperimentPlan p;
    p.cases = reference_cases();
    p.alpha_grid = parse_alpha_grid("0.1:1.2:0.1");

    MethodPlan kf;
    kf.id = "kf";
    MethodPlan cb;
    cb.id = "cbpkf";
    cb.kind = MethodKind::kCbpkf;
    cb.alpha_grid = true;
    MethodPlan vi;
    vi.id = "vikf";
    vi.kind = MethodKind::kVikf;
    MethodPlan ad;
    ad.id = "adaptive";
    ad.kind = MethodKind::kAdaptive;
    MethodPlan orc = ad;
    orc.id = "oracle";
    orc.mode = AdaptiveMode::kTruthOracle;
    p.methods = {kf, cb, vi, ad, orc};

    TimingPlan t;
    t.dims = {{1, 10}, {1, 40}, {5, 10}, {5, 40}, {10, 10}, {10, 40}};
    p.timing = t;
    return p;
}

ExperimentPlan plan_from_json(const std::string& text) {
    ExperimentPlan p = default_plan();
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw ConfigError("plan must be a JSON object");
        if (j.contains("cases")) {
            p.cases.clear();
            for (const auto& c : j.at("cases")) p.cases.push_back(case_from_json(c));
        }
        if (j.contains("n_cycles")) {
            for (auto& c : p.cases) c.n_cycles = j.at("n_cycles").get<std::int64_t>();
        }
        if (j.contains("methods")) {
            p.methods.clear();
            for (const auto& m : j.at("methods")) p.methods.push_back(method_from_json(m));
        }
        if (j.contains("alpha_grid")) {
            const auto& g = j.at("alpha_grid");
            p.alpha_grid = g.is_string() ? parse_alpha_grid(g.get<std::string>()) : g.get<std::vector<double>>();
        }
        p.output_dir = j.value("output_dir", p.output_dir);
        p.workers = j.value("workers", p.workers);
        p.master_seed = j.value("master_seed", p.master_seed);
        p.burn_in = j.value("burn_in", p.burn_in);
        p.n_thresholds = j.value("n_thresholds", p.n_thresholds);
        p.top_percentile = j.value("top_percentile", p.top_percentile);
        if (j.contains("tail_mode")) {
            const auto s = j.at("tail_mode").get<std::string>();
            if (s == "upper") p.tail_mode = TailMode::kUpper;
            else if (s == "absolute") p.tail_mode = TailMode::kAbsolute;
            else throw ConfigError("tail_mode must be upper or absolute");
        }
        p.calibration_bins = j.value("calibration_bins", p.calibration_bins);
        p.write_scatter = j.value("write_scatter", p.write_scatter);
        if (j.contains("timing")) {
            if (j.at("timing").is_null()) p.timing.reset();
            else p.timing = timing_from_json(j.at("timing"), p.timing.value_or(TimingPlan{}));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("plan: ") + e.what());
    }
    p.validate();
    return p;
}

ExperimentPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read plan file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return plan_from_json(ss.str());
}

std::string plan_to_json(const ExperimentPlan& p) {
    json cases = json::array();
    for (const auto& c : p.cases) {
        // case seeds are always derived from master_seed at run time
        json cj = case_to_json(c);
        cj.erase("seed");
        cases.push_back(cj);
    }
    json methods = json::array();
    for (const auto& m : p.methods) methods.push_back(method_to_json(m));
    json j{{"cases", cases},
           {"methods", methods},
           {"alpha_grid", p.alpha_grid},
           {"output_dir", p.output_dir},
           {"workers", p.workers},
           {"master_seed", p.master_seed},
           {"burn_in", p.burn_in},
           {"n_thresholds", p.n_thresholds},
           {"top_percentile", p.top_percentile},
           {"tail_mode", p.tail_mode == TailMode::kUpper ? "upper" : "absolute"},
           {"calibration_bins", p.calibration_bins},
           {"write_scatter", p.write_scatter},
           {"timing", p.timing ? timing_to_json(*p.timing) : json(nullptr)}};
    return j.dump(2);
}

std::vector<double> parse_alpha_grid(const std::string& spec) {
    double a = 0, b = 0, s = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(spec);
    if (!(in >> a >> c1 >> b >> c2 >> s) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof()) {
        throw ConfigError("alpha grid must look like start:stop:step, got '" + spec + "'");
    }
    if (!(s > 0.0) || b < a || a < 0.0) throw ConfigError("alpha grid needs 0 <= start <= stop and step > 0");
    std::vector<double> out;
    const auto count = static_cast<long>(std::floor((b - a) / s + 1e-9));
    for (long i = 0; i <= count; ++i) {
        // Round to 12 significant decimals so 0.1 * 3 prints as 0.3.
        out.push_back(std::round((a + static_cast<double>(i) * s) * 1e12) / 1e12);
    }
    return out;
}

std::pair<int, int> parse_dims(const std::string& spec) {
    int m = 0, n = 0;
    char x = 0;
    std::istringstream in(spec);
    if (!(in >> m >> x >> n) || (x != 'x' && x != 'X') || !(in >> std::ws).eof() || m < 1 || n < 1) {
        throw ConfigError("dims must look like MxN, got '" + spec + "'");
    }
    return {m, n};
}

std::uint64_t case_seed(std::uint64_t master, int case_id) {
    return derive_seed(master, static_cast<std::uint64_t>(case_id));
}

std::vector<MethodSpec> resolve_methods(const ExperimentPlan& plan, const CaseParams& c) {
    std::vector<MethodSpec> out;
    for (const auto& mp : plan.methods) {
        MethodSpec s;
        s.id = mp.id;
        s.kind = mp.kind;
        switch (mp.kind) {
            case MethodKind::kKf: out.push_back(s); break;
            case MethodKind::kCbpkf:
            case MethodKind::kVikf: {
                std::vector<double> alphas;
                if (mp.alpha_grid) alphas = plan.alpha_grid;
                else alphas.push_back(mp.alpha ? *mp.alpha : group_alpha(c.group()));
                for (double a : alphas) {
                    MethodSpec e = s;
                    if (mp.alpha_grid) e.id = mp.id + "_a" + alpha_label(a);
                    e.cbpkf.alpha = a;
                    e.cbpkf.c1_form = mp.c1_form;
                    e.vikf.alpha = a;
                    e.vikf.alpha_boost = mp.boost.value_or(1.0);
                    out.push_back(e);
                }
                break;
            }
            case MethodKind::kAdaptive:
                s.adaptive.mode = mp.mode;
                s.adaptive.gamma = mp.gamma ? *mp.gamma : default_gamma(c.group(), mp.mode);
                s.adaptive.alpha_cap = mp.alpha_cap;
                s.adaptive.update = mp.update;
                s.adaptive.vikf_boost = mp.vikf_boost;
                s.adaptive.penalty.c1_form = mp.c1_form;
                out.push_back(s);
                break;
        }
    }
    return out;
}

// ---- running --------------------------------------------------------------

int run_timing(const ExperimentPlan& plan, const TimingPlan& timing, std::ostream& log) {
    const fs::path dir(plan.output_dir);
    fs::create_directories(dir);
    const std::string path = (dir / "timing.csv").string();
    bool append = false;
    for (const auto& [m, n] : timing.dims) {
        CaseParams c = plan.cases.front();
        c.case_id = 0;
        c.m = m;
        c.n = n;
        c.n_cycles = timing.n_cycles;
        c.seed = derive_seed(plan.master_seed, kTimingStream + static_cast<std::uint64_t>(m) * 1000 + n);
        const Trajectory traj = simulate(c);
        const StateEstimate init = initial_estimate(c);

        MethodSpec kf;
        kf.id = "kf";
        MethodSpec vi;
        vi.id = "vikf";
        vi.kind = MethodKind::kVikf;
        vi.vikf.alpha = timing.alpha;
        vi.vikf.alpha_boost = timing.vikf_boost;
        MethodSpec cb;
        cb.id = "cbpkf";
        cb.kind = MethodKind::kCbpkf;
        cb.cbpkf.alpha = timing.alpha;

        const auto rows = timing_comparison(traj, init, {kf, vi, cb}, timing.repeats);
        write_timing_csv(path, m, n, rows, append);
        append = true;
        log << "timing " << m << 'x' << n << ':';
        for (const auto& r : rows) log << ' ' << r.method_id << '=' << std::setprecision(3) << r.normalized;
        log << '\n';
    }
    return 0;
}

int run_plan(const ExperimentPlan& plan, std::ostream& log) {
    plan.validate();
    const fs::path root(plan.output_dir);
    fs::create_directories(root);

    std::vector<json> results(plan.cases.size());
    std::mutex log_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < plan.cases.size(); i = next++) {
            const CaseParams& c = plan.cases[i];
            const std::string name = case_dir_name(c.case_id);
            json r{{"case_id", c.case_id}, {"seed", case_seed(plan.master_seed, c.case_id)}, {"dir", name}};
            try {
                run_case(plan, c, root / name, log, log_mutex);
                r["status"] = "ok";
            } catch (const std::exception& e) {
                r["status"] = "error";
                r["error"] = e.what();
                std::lock_guard lock(log_mutex);
                log << "case " << c.case_id << " failed: " << e.what() << '\n';
            }
            results[i] = std::move(r);
        }
    };
    const auto n_workers = static_cast<std::size_t>(std::min<int>(plan.workers, static_cast<int>(plan.cases.size())));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int status = 0;
    for (const auto& r : results) {
        if (r["status"] != "ok") status = 1;
    }

    json timing_entry = nullptr;
    if (plan.timing && !plan.timing->dims.empty()) {
        try {
            run_timing(plan, *plan.timing, log);
            timing_entry = "timing.csv";
        } catch (const std::exception& e) {
            log << "timing failed: " << e.what() << '\n';
            status = 1;
        }
    }

    json manifest{{"tool", "cbpkf_bench"},
                  {"version", CBPKF_VERSION},
                  {"plan", json::parse(plan_to_json(plan))},
                  {"cases", results},
                  {"timing", timing_entry}};
    write_json(root / "manifest.json", manifest);
    return status;
}

// ---- summarize ------------------------------------------------------------

int summarize(const std::string& output_dir, std::ostream& out, std::ostream& err) {
    const fs::path root(output_dir);
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) {
        err << "missing: " << manifest_path.string() << '\n';
        return 1;
    }
    json manifest;
    try {
        std::ifstream in(manifest_path);
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        err << "unreadable manifest: " << e.what() << '\n';
        return 1;
    }

    std::vector<std::string> missing;
    char line[256];
    out << "tool " << manifest.value("tool", "?") << " version " << manifest.value("version", "?") << '\n';
    std::snprintf(line, sizeof line, "%-5s %-14s %12s %10s %10s %10s\n", "case", "method", "rmse", "d_rmse%",
                  "tail%", "time_x");
    out << line;
    for (const auto& c : manifest.value("cases", json::array())) {
        const int id = c.value("case_id", 0);
        if (c.value("status", "") != "ok") {
            missing.push_back("case " + std::to_string(id) + " failed: " + c.value("error", "unknown error"));
            continue;
        }
        const fs::path sp = root / c.value("dir", case_dir_name(id)) / "summary.json";
        if (!fs::exists(sp)) {
            missing.push_back(sp.string());
            continue;
        }
        json s;
        try {
            std::ifstream in(sp);
            s = json::parse(in);
        } catch (const json::exception&) {
            missing.push_back(sp.string() + " (unreadable)");
            continue;
        }
        for (const auto& [mid, m] : s.at("methods").items()) {
            for (const auto& f : m.value("files", json::array())) {
                const fs::path fp = sp.parent_path() / f.get<std::string>();
                if (!fs::exists(fp)) missing.push_back(fp.string());
            }
            const auto& tail = m.at("tail");
            char tail_buf[32] = "NA";
            if (!tail.is_null()) std::snprintf(tail_buf, sizeof tail_buf, "%.2f", tail.at("percent").get<double>());
            std::snprintf(line, sizeof line, "%-5d %-14s %12.6f %10.2f %10s %10.2f\n", id, mid.c_str(),
                          m.at("unconditional_rmse").get<double>(), m.at("unconditional_change_percent").get<double>(),
                          tail_buf, m.at("time_ratio").get<double>());
            out << line;
        }
    }

    const auto& timing = manifest.value("timing", json(nullptr));
    if (timing.is_string()) {
        const fs::path tp = root / timing.get<std::string>();
        std::ifstream in(tp);
        if (!in) {
            missing.push_back(tp.string());
        } else {
            out << "\ntiming (normalized by kf)\n";
            std::string row;
            std::getline(in, row);  // header
            while (std::getline(in, row)) out << "  " << row << '\n';
        }
    }

    for (const auto& m : missing) err << "missing: " << m << '\n';
    return missing.empty() ? 0 : 1;
}

}  // namespace cbpkf
