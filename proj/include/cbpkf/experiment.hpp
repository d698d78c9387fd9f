#pragma once

#include "cbpkf/evaluation.hpp"
#include "cbpkf/filter_runner.hpp"
#include "cbpkf/system_sim.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cbpkf {

/// One method entry of a plan. Entries with `alpha_grid` set expand into one
/// run per grid value with id "<id>_a<alpha>".
struct MethodPlan {
    std::string id;
    MethodKind kind = MethodKind::kKf;

    // cbpkf / vikf
    std::optional<double> alpha;  ///< empty: the group default (0.7 / 0.6 / 0.5)
    bool alpha_grid = false;
    CbGainForm c1_form = CbGainForm::kFull;
    std::optional<double> boost;  ///< vikf only; empty: calibrated per case

    // adaptive
    AdaptiveMode mode = AdaptiveMode::kKfEstimate;
    std::optional<double> gamma;  ///< empty: the group default for `mode`
    double alpha_cap = 2.0;
    AdaptiveUpdate update = AdaptiveUpdate::kCbpkf;
    double vikf_boost = 1.0;
};

struct TimingPlan {
    std::vector<std::pair<int, int>> dims;  ///< (m, n)
    std::int64_t n_cycles = 2000;
    int repeats = 3;
    double alpha = 0.5;
    double vikf_boost = 1.5;
};

struct ExperimentPlan {
    std::vector<CaseParams> cases;
    std::vector<MethodPlan> methods;
    std::vector<double> alpha_grid;
    std::string output_dir = "out";
    int workers = 1;
    std::uint64_t master_seed = 20210101;
    std::int64_t burn_in = kDefaultBurnIn;
    int n_thresholds = 21;
    double top_percentile = 99.9;
    TailMode tail_mode = TailMode::kUpper;
    int calibration_bins = 20;
    bool write_scatter = false;
    std::optional<TimingPlan> timing;

    /// Throws ConfigError on duplicate method ids, negative α values and the like.
    void validate() const;
};

/// Fixed α used for a reference-case group: 0.7, 0.6, 0.5 for groups 1-3.
double group_alpha(int group);

/// The 12 reference cases with kf, the cbpkf α grid 0.1..1.2, vikf
/// (group α, calibrated boost), adaptive and oracle, plus the six timing
/// dimensions.
ExperimentPlan default_plan();

/// Parses a JSON plan. Absent fields keep their default_plan() values.
ExperimentPlan plan_from_json(const std::string& text);
ExperimentPlan load_plan(const std::string& path);
std::string plan_to_json(const ExperimentPlan& plan);

/// "0.1:1.2:0.1" -> {0.1, 0.2, ..., 1.2}; the end point is included.
std::vector<double> parse_alpha_grid(const std::string& spec);
/// "10x40" -> (10, 40).
std::pair<int, int> parse_dims(const std::string& spec);

/// Seed of a case: derive_seed(master, case_id), independent of which other
/// cases are in the plan.
std::uint64_t case_seed(std::uint64_t master, int case_id);

/// Concrete method runs for one case after α-grid expansion and group defaults.
std::vector<MethodSpec> resolve_methods(const ExperimentPlan& plan, const CaseParams& c);

/// Runs every case (and the timing section, if any), writes the artifacts
/// and manifest.json into plan.output_dir. Returns 0 on success, 1 if any
/// case failed.
int run_plan(const ExperimentPlan& plan, std::ostream& log);

/// Timing only: writes <output_dir>/timing.csv for the given dimensions.
int run_timing(const ExperimentPlan& plan, const TimingPlan& timing, std::ostream& log);

/// Prints a per-case table from a finished output directory. Missing or
/// failed artifacts are listed on `err` and give a nonzero return.
int summarize(const std::string& output_dir, std::ostream& out, std::ostream& err);

}  // namespace cbpkf
