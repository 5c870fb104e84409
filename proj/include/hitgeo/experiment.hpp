#pragma once

#include <string>
#include <vector>

#include "hitgeo/config.hpp"
#include "hitgeo/oracle.hpp"
#include "hitgeo/planner.hpp"

namespace hitgeo {

// Experiment orchestration: planner-in-the-loop evaluation, the resumable
// gen-env -> collect -> train -> eval pipeline, the theorem-verification
// suites, and cross-seed report aggregation.

struct EvalRow {
    PlannerKind planner;
    int goal = 0;
    double success_rate = 0.0;
    double mean_steps = -1.0;  // over successful episodes; -1 when none succeeded
    int episodes = 0;
};

std::vector<EvalRow> evaluate(const FiniteCMP& env, TrainState& state, const Dataset& data,
                              const PlanSpec& plan, const EvalSpec& eval,
                              const TrainConfig& train_cfg, std::uint64_t seed);

// Largest directed cost ratio c(i,j)/c(j,i) over coreset pairs; the
// asymmetry witness diagnostic for trained encoders.
double max_cost_asymmetry(const FiniteCMP& env, TrainState& state, const Dataset& data,
                          const PlanSpec& plan, const TrainConfig& train_cfg);

struct RunArtifacts {
    std::string run_dir;
    std::vector<EvalRow> eval_rows;
};

// One seed of the full pipeline, resuming from whatever artifacts already
// exist in the run directory.
RunArtifacts run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// All seeds, fanned out over worker threads capped by HITGEO_THREADS.
std::vector<RunArtifacts> run_experiment(const ExperimentConfig& cfg);

struct SuiteResult {
    std::string name;
    bool pass = true;
    int cases = 0;
    double worst = 0.0;  // suite-specific worst observed statistic
    std::vector<std::vector<std::string>> csv_rows;  // suite,case,goal,epsilon,observed,threshold,pass
};

// Exact-oracle verification suites.
SuiteResult suite_poisson(int chains, int mc_chains, int mc_episodes, std::uint64_t seed);
SuiteResult suite_representation(int cmps, std::uint64_t seed);
SuiteResult suite_isomorphism(int pairs, std::uint64_t seed);
SuiteResult suite_bound(int chains, int trials, std::uint64_t seed);
std::vector<SuiteResult> run_verify_suites(std::uint64_t seed, const std::string& csv_path);

struct ReportRow {
    PlannerKind planner;
    double mean_success = 0.0;
    double std_success = 0.0;
    double mean_steps = -1.0;
    int seeds = 0;
};

std::vector<ReportRow> aggregate_runs(const std::vector<std::string>& run_dirs);

}  // namespace hitgeo
