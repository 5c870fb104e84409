#pragma once

#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hitgeo/errors.hpp"

namespace hitgeo {

// Test-time planning over coreset embeddings: DPP-greedy vertex selection,
// asymmetric edge costs, a symmetrized-MST + k-NN directed graph, and
// goal-rooted shortest paths on the reversed graph.

struct Coreset {
    std::vector<int> members;     // state indices
    Eigen::MatrixXd embeddings;   // latent_dim x |members|
    double kernel_sigma = 1.0;
};

// Greedy MAP selection under the Gaussian kernel exp(-||x-y||^2 / (2 sigma^2)):
// repeatedly add the candidate with the largest conditional-variance gain
// (incremental Cholesky), stopping at `budget` or when the best gain drops
// below 1e-12. Ties break toward the lowest candidate index.
Coreset dpp_greedy_coreset(const Eigen::MatrixXd& candidates, const std::vector<int>& ids,
                           int budget, double sigma);

struct CostMatrix {
    Eigen::MatrixXd c;  // c(i, j) = directed score from vertex i to vertex j
    int goal = -1;
    double beta = 0.0;
};

CostMatrix cost_matrix(const Coreset& coreset, const Eigen::VectorXd& omega_goal, int goal,
                       double beta);

struct PlanGraph {
    int n = 0;
    int k = 0;
    bool reversed = true;  // adjacency is stored goal-rooted: adj[u] holds (v, w)
                           // for every forward edge v -> u with cost w
    std::vector<std::vector<std::pair<int, double>>> adj;
    std::vector<std::pair<int, int>> mst_edges;

    bool has_forward_edge(int from, int to) const;
};

// MST on (c + c^T)/2 for connectivity, per-row top-k smallest directed costs,
// MST edges forced in both directions with their asymmetric costs; returns
// the edge-reversed graph ready for goal-rooted SSSP.
PlanGraph construct_graph(const CostMatrix& cost, int k);

struct ShortestPaths {
    std::vector<double> dist;  // forward cost-to-source on the reversed graph
    std::vector<int> pred;     // next forward hop toward the source; -1 at source/unreached
    int source = -1;
};

// Dijkstra with a binary heap; deterministic tie-break by vertex index.
ShortestPaths shortest_paths(const PlanGraph& graph, int source);

struct PlanResult {
    int next_vertex = -1;       // state index of the next subgoal, -1 when absent
    double path_cost = std::numeric_limits<double>::infinity();
    int localized_vertex = -1;  // state index the current state localized to
};

// One planning step: localize the goal and the current state on the coreset,
// hop along the predecessor chain, and emit the unit latent direction z.
// Falls back to direct pursuit of phi(g) when no hop is available.
PlanResult plan_step(const Coreset& coreset, const ShortestPaths& sp, int v_goal,
                     const Eigen::VectorXd& phi_x, const Eigen::VectorXd& phi_g,
                     const Eigen::VectorXd& omega_goal, double beta, Eigen::VectorXd& z_out);

int localize_goal_vertex(const Coreset& coreset, const Eigen::VectorXd& phi_g,
                         const Eigen::VectorXd& omega_goal, double beta);

// Recursive-midpoint baseline on the symmetric (beta = 0) score: pick the
// pool element minimizing the worse of the two legs, recurse toward the
// current state, return the innermost subgoal's coreset index.
int rec_mid_plan(const Eigen::VectorXd& phi_x, const Eigen::VectorXd& phi_g,
                 const Coreset& coreset, int depth);

// Exhaustive checks used by tests and the verify suites.
std::vector<double> bellman_ford_distances(const PlanGraph& graph, int source);
bool graph_strongly_connected(const PlanGraph& graph);

}  // namespace hitgeo
