#include "hitgeo/planner.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "hitgeo/train.hpp"

namespace hitgeo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGainFloor = 1e-12;

}  // namespace

Coreset dpp_greedy_coreset(const Eigen::MatrixXd& candidates, const std::vector<int>& ids,
                           int budget, double sigma) {
    const int n = static_cast<int>(candidates.cols());
    if (static_cast<int>(ids.size()) != n) throw ShapeMismatch("ids vs candidate embeddings");
    if (n < 2) throw TooFewCandidates("need at least 2 candidates");
    if (budget < 2) throw InvalidArgument("budget must be >= 2");
    if (sigma <= 0.0) throw InvalidArgument("sigma must be > 0");

    auto kernel = [&](int i, int j) {
        const double d2 = (candidates.col(i) - candidates.col(j)).squaredNorm();
        return std::exp(-d2 / (2.0 * sigma * sigma));
    };

    // Incremental Cholesky of the selected kernel block: for candidate c the
    // marginal gain is the conditional variance k(c,c) - ||v_c||^2 where
    // L v_c = K(selected, c).
    std::vector<int> selected;
    Eigen::MatrixXd L;  // lower-triangular factor, grows with the selection
    std::vector<char> taken(n, 0);

    while (static_cast<int>(selected.size()) < std::min(budget, n)) {
        const int m = static_cast<int>(selected.size());
        int best = -1;
        double best_gain = -1.0;
        Eigen::VectorXd best_v;
        for (int c = 0; c < n; ++c) {
            if (taken[c]) continue;
            Eigen::VectorXd kvec(m);
            for (int i = 0; i < m; ++i) kvec[i] = kernel(selected[i], c);
            Eigen::VectorXd v =
                m > 0 ? Eigen::VectorXd(L.triangularView<Eigen::Lower>().solve(kvec))
                      : Eigen::VectorXd(0);
            const double gain = kernel(c, c) - v.squaredNorm();
            if (gain > best_gain) {  // strict: ties keep the lowest index
                best_gain = gain;
                best = c;
                best_v = v;
            }
        }
        if (best < 0 || best_gain < kGainFloor) break;

        Eigen::MatrixXd L_next = Eigen::MatrixXd::Zero(m + 1, m + 1);
        L_next.topLeftCorner(m, m) = L;
        L_next.block(m, 0, 1, m) = best_v.transpose();
        L_next(m, m) = std::sqrt(best_gain);
        L = std::move(L_next);
        taken[best] = 1;
        selected.push_back(best);
    }

    if (static_cast<int>(selected.size()) < 2)
        throw TooFewCandidates("coreset collapsed below 2 members");

    Coreset cs;
    cs.kernel_sigma = sigma;
    cs.members.reserve(selected.size());
    cs.embeddings.resize(candidates.rows(), selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        cs.members.push_back(ids[selected[i]]);
        cs.embeddings.col(i) = candidates.col(selected[i]);
    }
    return cs;
}

CostMatrix cost_matrix(const Coreset& coreset, const Eigen::VectorXd& omega_goal, int goal,
                       double beta) {
    const int n = static_cast<int>(coreset.members.size());
    CostMatrix cm;
    cm.goal = goal;
    cm.beta = beta;
    cm.c = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j)
                cm.c(i, j) = directed_score(coreset.embeddings.col(i), coreset.embeddings.col(j),
                                            omega_goal, beta);
    return cm;
}

bool PlanGraph::has_forward_edge(int from, int to) const {
    // Reversed storage: forward from->to lives in adj[to].
    for (const auto& [v, w] : adj[to])
        if (v == from) return true;
    return false;
}

PlanGraph construct_graph(const CostMatrix& cost, int k) {
    const int n = static_cast<int>(cost.c.rows());
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (n < 2) throw InvalidArgument("graph needs at least 2 vertices");

    PlanGraph g;
    g.n = n;
    g.k = k;
    g.adj.assign(n, {});

    // Prim's MST on the symmetrized costs; deterministic tie-break on (key, vertex).
    const Eigen::MatrixXd sym = 0.5 * (cost.c + cost.c.transpose());
    std::vector<char> in_tree(n, 0);
    std::vector<double> key(n, kInf);
    std::vector<int> parent(n, -1);
    key[0] = 0.0;
    for (int round = 0; round < n; ++round) {
        int u = -1;
        for (int v = 0; v < n; ++v)
            if (!in_tree[v] && (u < 0 || key[v] < key[u])) u = v;
        in_tree[u] = 1;
        if (parent[u] >= 0) g.mst_edges.emplace_back(std::min(parent[u], u), std::max(parent[u], u));
        for (int v = 0; v < n; ++v)
            if (!in_tree[v] && sym(u, v) < key[v]) {
                key[v] = sym(u, v);
                parent[v] = u;
            }
    }

    // Directed edge selection: top-k smallest per row, then forced MST edges
    // in both directions. Forward edge i->j is stored reversed in adj[j].
    std::vector<std::vector<char>> present(n, std::vector<char>(n, 0));
    auto add_edge = [&](int i, int j) {
        if (i == j || present[i][j]) return;
        present[i][j] = 1;
        g.adj[j].emplace_back(i, cost.c(i, j));
    };

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return cost.c(i, a) != cost.c(i, b) ? cost.c(i, a) < cost.c(i, b) : a < b;
        });
        const int keep = std::min<int>(k, static_cast<int>(order.size()));
        for (int t = 0; t < keep; ++t) add_edge(i, order[t]);
    }
    for (const auto& [i, j] : g.mst_edges) {
        add_edge(i, j);
        add_edge(j, i);
    }
    for (auto& lst : g.adj)
        std::sort(lst.begin(), lst.end());
    return g;
}

ShortestPaths shortest_paths(const PlanGraph& graph, int source) {
    if (!graph.reversed) throw InvalidArgument("SSSP expects the reversed graph");
    if (source < 0 || source >= graph.n) throw InvalidArgument("source out of range");

    ShortestPaths sp;
    sp.source = source;
    sp.dist.assign(graph.n, kInf);
    sp.pred.assign(graph.n, -1);
    sp.dist[source] = 0.0;

    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.emplace(0.0, source);
    std::vector<char> done(graph.n, 0);
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (done[u]) continue;
        done[u] = 1;
        for (const auto& [v, w] : graph.adj[u]) {
            if (w < 0.0) throw InvalidArgument("negative edge cost");
            const double nd = d + w;
            if (nd < sp.dist[v]) {
                sp.dist[v] = nd;
                sp.pred[v] = u;
                heap.emplace(nd, v);
            }
        }
    }
    return sp;
}

int localize_goal_vertex(const Coreset& coreset, const Eigen::VectorXd& phi_g,
                         const Eigen::VectorXd& omega_goal, double beta) {
    const int n = static_cast<int>(coreset.members.size());
    int best = 0;
    double best_cost = kInf;
    for (int i = 0; i < n; ++i) {
        const double c = directed_score(coreset.embeddings.col(i), phi_g, omega_goal, beta);
        if (c < best_cost) {
            best_cost = c;
            best = i;
        }
    }
    return best;
}

PlanResult plan_step(const Coreset& coreset, const ShortestPaths& sp, int v_goal,
                     const Eigen::VectorXd& phi_x, const Eigen::VectorXd& phi_g,
                     const Eigen::VectorXd& omega_goal, double beta, Eigen::VectorXd& z_out) {
    const int n = static_cast<int>(coreset.members.size());

    int v_curr = 0;
    double best_cost = kInf;
    for (int i = 0; i < n; ++i) {
        const double c = directed_score(phi_x, coreset.embeddings.col(i), omega_goal, beta);
        if (c < best_cost) {
            best_cost = c;
            v_curr = i;
        }
    }

    const int v_next = sp.pred[v_curr];
    PlanResult result;
    result.localized_vertex = coreset.members[v_curr];
    result.path_cost = sp.dist[v_curr];

    Eigen::VectorXd target;
    if (v_next >= 0 && v_curr != v_goal) {
        target = coreset.embeddings.col(v_next);
        result.next_vertex = coreset.members[v_next];
    } else {
        target = phi_g;  // direct pursuit
    }
    z_out = target - phi_x;
    z_out /= z_out.norm() + 1e-12;
    return result;
}

int rec_mid_plan(const Eigen::VectorXd& phi_x, const Eigen::VectorXd& phi_g,
                 const Coreset& coreset, int depth) {
    if (depth < 1) throw InvalidArgument("depth must be >= 1");
    const int n = static_cast<int>(coreset.members.size());

    Eigen::VectorXd goal_emb = phi_g;
    int pick = 0;
    for (int level = 0; level < depth; ++level) {
        double best = kInf;
        pick = 0;
        for (int m = 0; m < n; ++m) {
            const double leg_a = (coreset.embeddings.col(m) - phi_x).norm();
            const double leg_b = (goal_emb - coreset.embeddings.col(m)).norm();
            const double worst = std::max(leg_a, leg_b);
            if (worst < best) {
                best = worst;
                pick = m;
            }
        }
        goal_emb = coreset.embeddings.col(pick);
    }
    return pick;
}

std::vector<double> bellman_ford_distances(const PlanGraph& graph, int source) {
    std::vector<double> dist(graph.n, kInf);
    dist[source] = 0.0;
    for (int round = 0; round < graph.n; ++round) {
        bool changed = false;
        for (int u = 0; u < graph.n; ++u) {
            if (dist[u] == kInf) continue;
            for (const auto& [v, w] : graph.adj[u]) {
                const double nd = dist[u] + w;
                if (nd < dist[v]) {
                    dist[v] = nd;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    return dist;
}

bool graph_strongly_connected(const PlanGraph& graph) {
    // Reachability in both orientations from vertex 0.
    auto reach = [&](bool forward) {
        std::vector<std::vector<int>> adj(graph.n);
        for (int u = 0; u < graph.n; ++u)
            for (const auto& [v, w] : graph.adj[u]) {
                // Stored edge u->v is the reversal of forward v->u.
                if (forward)
                    adj[v].push_back(u);
                else
                    adj[u].push_back(v);
            }
        std::vector<char> seen(graph.n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : adj[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    ++count;
                    stack.push_back(v);
                }
        }
        return count == graph.n;
    };
    return reach(true) && reach(false);
}

}  // namespace hitgeo
