#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hitgeo/cmp.hpp"
#include "hitgeo/train.hpp"

namespace hitgeo {

// Human-editable sectioned key=value configuration. Unknown sections or keys
// are rejected outright so stale configs cannot silently drift.

enum class EnvKind { one_way_grid, random_digraph };
enum class BehaviorKind { uniform, goal_seek };
enum class PlannerKind { rec_mid, sym_graph, asym_graph, direct };

PlannerKind planner_from_string(const std::string& s);
std::string planner_to_string(PlannerKind kind);

struct EnvSpec {
    EnvKind kind = EnvKind::one_way_grid;
    int width = 8;
    int height = 8;
    double slip = 0.05;
    std::vector<OneWayEdge> one_way_edges;
    int n_states = 16;   // random_digraph
    int n_actions = 4;   // random_digraph
    int out_degree = 2;  // random_digraph
};

struct DataSpec {
    int trajectories = 500;
    int length = 60;
    BehaviorKind behavior = BehaviorKind::uniform;
    double behavior_eps = 0.3;
    int behavior_goal = 0;
};

struct PlanSpec {
    int k = 10;
    double coreset_sigma = 20.0;
    int coreset_budget = 256;
    int rec_mid_depth = 3;
    double beta = -1.0;  // < 0: use the training beta
};

struct EvalSpec {
    std::vector<PlannerKind> planners{PlannerKind::asym_graph, PlannerKind::sym_graph,
                                      PlannerKind::direct};
    std::vector<int> goals;  // empty: auto_goals evenly spaced states
    int auto_goals = 4;
    int episodes = 25;
    int max_steps = 100;
    ActMode mode = ActMode::sample;
};

struct ExperimentConfig {
    EnvSpec env;
    DataSpec data;
    TrainConfig train;
    PlanSpec plan;
    EvalSpec eval;
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "runs";

    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& assignment);  // "section.key=value"
std::string config_to_text(const ExperimentConfig& cfg);

FiniteCMP build_env(const EnvSpec& spec, std::uint64_t seed);
TabularPolicy build_behavior(const FiniteCMP& env, const DataSpec& spec);

}  // namespace hitgeo
