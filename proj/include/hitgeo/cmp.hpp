#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hitgeo/errors.hpp"
#include "hitgeo/rng.hpp"

namespace hitgeo {

// Finite controlled Markov process: states, actions, and one row-stochastic
// transition matrix per action. No reward.
struct FiniteCMP {
    int n_states = 0;
    int n_actions = 0;
    std::vector<Eigen::MatrixXd> kernel;            // kernel[a](x, x') = P(x' | x, a)
    std::vector<std::array<double, 2>> coords;      // optional per-state coordinates
    std::string tag;

    void validate() const;                          // throws on broken invariants
    std::uint64_t fingerprint() const;
    bool has_coords() const { return !coords.empty(); }
};

struct TabularPolicy {
    Eigen::MatrixXd probs;                          // n_states x n_actions

    void validate() const;
};

TabularPolicy uniform_policy(const FiniteCMP& env);

// Epsilon-greedy toward a fixed goal; the greedy action minimizes expected
// steps-to-goal computed by value iteration on the kernel. Gives the dataset
// quality knob without touching the oracle module.
TabularPolicy goal_seeking_policy(const FiniteCMP& env, int goal, double eps);

struct Trajectory {
    std::vector<int> states;                        // length = transitions + 1
    std::vector<int> actions;                       // length = transitions

    int length() const { return static_cast<int>(actions.size()); }
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    std::uint64_t env_fingerprint = 0;
    std::uint64_t seed = 0;
};

// Relabeled replay tuples: u sits exactly h steps after s on the same
// trajectory, s_next is the immediate successor of s, g is the relabeled goal.
struct TupleBatch {
    std::vector<int> s;
    std::vector<int> u;
    std::vector<int> h;
    std::vector<int> s_next;
    std::vector<int> g;

    std::size_t size() const { return s.size(); }
};

// Goal relabeling: with probability future_weight pick a future state on the
// same trajectory at a Geometric(geometric_p) offset (truncated at the end),
// otherwise a uniformly random dataset state occurrence.
struct GoalScheme {
    double future_weight = 0.7;
    double geometric_p = 0.1;
};

struct GridCell {
    int x = 0;
    int y = 0;

    bool operator==(const GridCell& o) const { return x == o.x && y == o.y; }
};

using OneWayEdge = std::pair<GridCell, GridCell>;

// 4-action (N/E/S/W) gridworld. A one-way edge (a, b) keeps the move a->b and
// blocks b->a; blocked moves and wall bumps leave the agent in place. With
// probability `slip` the agent stays regardless of the chosen action.
FiniteCMP make_one_way_gridworld(int width, int height,
                                 const std::vector<OneWayEdge>& one_way_edges,
                                 double slip);

// Random strongly connected digraph CMP: each (state, action) spreads its
// probability over `out_degree` sampled successors. Rejection-samples until
// the uniform-policy chain is strongly connected.
FiniteCMP make_random_digraph_cmp(int n_states, int n_actions, int out_degree,
                                  std::uint64_t seed);

Dataset sample_trajectories(const FiniteCMP& env, const TabularPolicy& policy,
                            int n, int len, std::uint64_t seed);

TupleBatch extract_tuples(const Dataset& data, int batch, int h_max,
                          const GoalScheme& scheme, Rng& rng);
TupleBatch extract_tuples(const Dataset& data, int batch, int h_max,
                          const GoalScheme& scheme, std::uint64_t seed);

// Directed reachability of the uniform-policy support graph.
bool strongly_connected(const FiniteCMP& env);

int grid_state(const FiniteCMP& grid, int x, int y);

}  // namespace hitgeo
