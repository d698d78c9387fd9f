// Experiment runner: simulates the reference cases, runs the filters and
// writes CSV/JSON artifacts; `summarize` prints a table from an output dir.

#include "cbpkf/error.hpp"
#include "cbpkf/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

namespace {

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CB-penalized Kalman filter experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment plan");
    std::string plan_path, cases, methods, alpha_grid, dims, out_dir;
    std::uint64_t seed = 0;
    int workers = 0;
    run->add_option("--plan", plan_path, "JSON plan file (default: built-in 12-case plan)");
    run->add_option("--cases", cases, "comma-separated case ids, e.g. 1,5,9");
    run->add_option("--methods", methods, "comma-separated method ids or kinds");
    run->add_option("--alpha-grid", alpha_grid, "fixed-alpha sweep start:stop:step");
    run->add_option("--dims", dims, "timing only, comma-separated MxN list");
    auto* seed_opt = run->add_option("--seed", seed, "master seed");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

    auto* sum = app.add_subcommand("summarize", "print a table from a finished run");
    std::string sum_dir;
    sum->add_option("--out", sum_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sum->parsed()) return cbpkf::summarize(sum_dir, std::cout, std::cerr);

        cbpkf::ExperimentPlan plan = plan_path.empty() ? cbpkf::default_plan() : cbpkf::load_plan(plan_path);
        if (!cases.empty()) {
            std::vector<cbpkf::CaseParams> picked;
            for (const auto& tok : split(cases)) {
                const int id = std::stoi(tok);
                auto it = std::find_if(plan.cases.begin(), plan.cases.end(),
                                       [id](const cbpkf::CaseParams& c) { return c.case_id == id; });
                picked.push_back(it != plan.cases.end() ? *it : cbpkf::reference_case(id));
            }
            plan.cases = picked;
        }
        if (!methods.empty()) {
            const auto wanted = split(methods);
            const std::set<std::string> keep(wanted.begin(), wanted.end());
            std::vector<cbpkf::MethodPlan> picked;
            for (const auto& m : plan.methods) {
                if (keep.count(m.id) || keep.count(cbpkf::to_string(m.kind))) picked.push_back(m);
            }
            if (picked.empty()) throw cbpkf::ConfigError("--methods selects nothing from the plan");
            plan.methods = picked;
        }
        if (!alpha_grid.empty()) plan.alpha_grid = cbpkf::parse_alpha_grid(alpha_grid);
        if (*seed_opt) plan.master_seed = seed;
        if (!out_dir.empty()) plan.output_dir = out_dir;
        if (workers > 0) plan.workers = workers;
        plan.validate();

        if (!dims.empty()) {
            cbpkf::TimingPlan t = plan.timing.value_or(cbpkf::TimingPlan{});
            t.dims.clear();
            for (const auto& d : split(dims)) t.dims.push_back(cbpkf::parse_dims(d));
            return cbpkf::run_timing(plan, t, std::cout);
        }
        return cbpkf::run_plan(plan, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
