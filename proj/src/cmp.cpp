#include "hitgeo/cmp.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace hitgeo {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_row_stochastic(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double p = m(r, c);
            if (p < 0.0) throw InvalidArgument(what + " has a negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTol)
            throw InvalidArgument(what + " row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
}

int sample_categorical(const double* probs, int n, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return n - 1;  // guard against accumulated rounding
}

}  // namespace

void FiniteCMP::validate() const {
    if (n_states < 2) throw InvalidArgument("FiniteCMP needs n_states >= 2");
    if (n_actions < 1) throw InvalidArgument("FiniteCMP needs n_actions >= 1");
    if (static_cast<int>(kernel.size()) != n_actions)
        throw ShapeMismatch("kernel action count");
    for (int a = 0; a < n_actions; ++a) {
        if (kernel[a].rows() != n_states || kernel[a].cols() != n_states)
            throw ShapeMismatch("kernel slice " + std::to_string(a));
        check_row_stochastic(kernel[a], "kernel[" + std::to_string(a) + "]");
    }
    if (!coords.empty() && static_cast<int>(coords.size()) != n_states)
        throw ShapeMismatch("coords length");
}

std::uint64_t FiniteCMP::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    hash_bytes(h, &n_states, sizeof(n_states));
    hash_bytes(h, &n_actions, sizeof(n_actions));
    for (const auto& m : kernel)
        hash_bytes(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    for (const auto& c : coords) hash_bytes(h, c.data(), sizeof(double) * 2);
    hash_bytes(h, tag.data(), tag.size());
    return h;
}

void TabularPolicy::validate() const {
    check_row_stochastic(probs, "policy");
}

TabularPolicy uniform_policy(const FiniteCMP& env) {
    TabularPolicy p;
    p.probs = Eigen::MatrixXd::Constant(env.n_states, env.n_actions, 1.0 / env.n_actions);
    return p;
}

TabularPolicy goal_seeking_policy(const FiniteCMP& env, int goal, double eps) {
    env.validate();
    if (goal < 0 || goal >= env.n_states) throw InvalidArgument("goal out of range");
    if (eps < 0.0 || eps > 1.0) throw InvalidArgument("eps must lie in [0,1]");

    // Value iteration for min expected steps-to-goal.
    const int n = env.n_states;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int it = 0; it < 100000; ++it) {
        Eigen::VectorXd next(n);
        double delta = 0.0;
        for (int x = 0; x < n; ++x) {
            if (x == goal) {
                next[x] = 0.0;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            for (int a = 0; a < env.n_actions; ++a) {
                double q = 1.0;
                for (int y = 0; y < n; ++y)
                    if (y != goal) q += env.kernel[a](x, y) * v[y];
                best = std::min(best, q);
            }
            next[x] = std::min(best, 4.0 * n * env.n_actions + 1.0);  // cap keeps dead ends finite
            delta = std::max(delta, std::abs(next[x] - v[x]));
        }
        v = next;
        if (delta < 1e-10) break;
    }

    TabularPolicy p;
    p.probs = Eigen::MatrixXd::Constant(env.n_states, env.n_actions, eps / env.n_actions);
    for (int x = 0; x < n; ++x) {
        int best_a = 0;
        double best_q = std::numeric_limits<double>::infinity();
        for (int a = 0; a < env.n_actions; ++a) {
            double q = 0.0;
            for (int y = 0; y < n; ++y)
                if (y != goal) q += env.kernel[a](x, y) * v[y];
            if (q < best_q) {
                best_q = q;
                best_a = a;
            }
        }
        p.probs(x, best_a) += 1.0 - eps;
    }
    return p;
}

bool strongly_connected(const FiniteCMP& env) {
    const int n = env.n_states;
    std::vector<std::vector<int>> fwd(n), rev(n);
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y) {
            bool edge = false;
            for (int a = 0; a < env.n_actions && !edge; ++a) edge = env.kernel[a](x, y) > 0.0;
            if (edge) {
                fwd[x].push_back(y);
                rev[y].push_back(x);
            }
        }
    }
    auto full_reach = [n](const std::vector<std::vector<int>>& adj) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int w : adj[u])
                if (!seen[w]) {
                    seen[w] = 1;
                    ++count;
                    stack.push_back(w);
                }
        }
        return count == n;
    };
    return full_reach(fwd) && full_reach(rev);
}

int grid_state(const FiniteCMP& grid, int x, int y) {
    if (grid.coords.empty()) throw InvalidArgument("environment has no grid coordinates");
    for (int s = 0; s < grid.n_states; ++s)
        if (static_cast<int>(grid.coords[s][0]) == x && static_cast<int>(grid.coords[s][1]) == y)
            return s;
    throw InvalidArgument("cell out of range");
}

FiniteCMP make_one_way_gridworld(int width, int height,
                                 const std::vector<OneWayEdge>& one_way_edges,
                                 double slip) {
    if (width < 1 || height < 1 || width * height < 2)
        throw InvalidArgument("grid needs at least 2 cells");
    if (slip < 0.0 || slip >= 1.0) throw InvalidArgument("slip must lie in [0,1)");

    const int n = width * height;
    auto in_grid = [&](const GridCell& c) {
        return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
    };
    auto idx = [&](const GridCell& c) { return c.y * width + c.x; };

    for (const auto& [a, b] : one_way_edges) {
        if (!in_grid(a) || !in_grid(b)) throw InvalidEdge("cell out of bounds");
        if (std::abs(a.x - b.x) + std::abs(a.y - b.y) != 1)
            throw InvalidEdge("one-way edge must connect adjacent cells");
    }

    FiniteCMP env;
    env.n_states = n;
    env.n_actions = 4;
    env.tag = "one_way_grid";
    env.kernel.assign(4, Eigen::MatrixXd::Zero(n, n));
    env.coords.resize(n);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            env.coords[y * width + x] = {static_cast<double>(x), static_cast<double>(y)};

    auto blocked = [&](const GridCell& from, const GridCell& to) {
        for (const auto& [a, b] : one_way_edges)
            if (b == from && a == to) return true;  // reverse of a declared one-way move
        return false;
    };

    // Actions: 0 = N (y-1), 1 = E (x+1), 2 = S (y+1), 3 = W (x-1).
    const int dx[4] = {0, 1, 0, -1};
    const int dy[4] = {-1, 0, 1, 0};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const GridCell c{x, y};
            const int s = idx(c);
            for (int a = 0; a < 4; ++a) {
                GridCell t{x + dx[a], y + dy[a]};
                if (!in_grid(t) || blocked(c, t)) t = c;
                env.kernel[a](s, idx(t)) += 1.0 - slip;
                env.kernel[a](s, s) += slip;
            }
        }
    }

    env.validate();
    if (!strongly_connected(env))
        throw NotStronglyConnected("one-way layout disconnects the grid");
    return env;
}

FiniteCMP make_random_digraph_cmp(int n_states, int n_actions, int out_degree,
                                  std::uint64_t seed) {
    if (n_states < 2) throw InvalidArgument("need n_states >= 2");
    if (n_actions < 1) throw InvalidArgument("need n_actions >= 1");
    if (out_degree < 1) throw InvalidArgument("need out_degree >= 1");
    const int deg = std::min(out_degree, n_states);

    Rng rng(seed);
    // Sparse draws need room: at out_degree 2 and n ~ 40 only ~0.5% of draws
    // are strongly connected (isolated in-degree-0 states dominate).
    constexpr int kMaxAttempts = 5000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        FiniteCMP env;
        env.n_states = n_states;
        env.n_actions = n_actions;
        env.tag = "random_digraph";
        env.kernel.assign(n_actions, Eigen::MatrixXd::Zero(n_states, n_states));
        for (int a = 0; a < n_actions; ++a) {
            for (int x = 0; x < n_states; ++x) {
                // Sample `deg` distinct successors.
                std::vector<int> succ;
                while (static_cast<int>(succ.size()) < deg) {
                    const int y = rng.uniform_int(n_states);
                    if (std::find(succ.begin(), succ.end(), y) == succ.end()) succ.push_back(y);
                }
                if (deg == 1) {
                    env.kernel[a](x, succ[0]) = 1.0;
                } else {
                    // Dirichlet(1) weights via normalized exponentials.
                    std::vector<double> w(deg);
                    double total = 0.0;
                    for (int i = 0; i < deg; ++i) {
                        w[i] = -std::log(1.0 - rng.uniform());
                        total += w[i];
                    }
                    double acc = 0.0;
                    for (int i = 0; i + 1 < deg; ++i) {
                        w[i] /= total;
                        acc += w[i];
                        env.kernel[a](x, succ[i]) = w[i];
                    }
                    env.kernel[a](x, succ[deg - 1]) = 1.0 - acc;  // rows sum to 1 exactly
                }
            }
        }
        if (strongly_connected(env)) {
            env.validate();
            return env;
        }
    }
    throw GenerationFailed("no strongly connected digraph after " + std::to_string(kMaxAttempts) +
                           " attempts");
}

Dataset sample_trajectories(const FiniteCMP& env, const TabularPolicy& policy,
                            int n, int len, std::uint64_t seed) {
    if (policy.probs.rows() != env.n_states || policy.probs.cols() != env.n_actions)
        throw ShapeMismatch("policy does not match environment");
    if (n < 1 || len < 1) throw InvalidArgument("need n >= 1 and len >= 1");

    Rng rng(seed);
    Dataset data;
    data.env_fingerprint = env.fingerprint();
    data.seed = seed;
    data.trajectories.reserve(n);

    // Rows of column-major matrices are strided; copy them for the sampler.
    std::vector<double> row(env.n_states);
    std::vector<double> act_row(env.n_actions);
    for (int i = 0; i < n; ++i) {
        Trajectory tr;
        tr.states.reserve(len + 1);
        tr.actions.reserve(len);
        int x = rng.uniform_int(env.n_states);
        tr.states.push_back(x);
        for (int t = 0; t < len; ++t) {
            for (int a2 = 0; a2 < env.n_actions; ++a2) act_row[a2] = policy.probs(x, a2);
            const int a = sample_categorical(act_row.data(), env.n_actions, rng);
            for (int y = 0; y < env.n_states; ++y) row[y] = env.kernel[a](x, y);
            const int x_next = sample_categorical(row.data(), env.n_states, rng);
            tr.actions.push_back(a);
            tr.states.push_back(x_next);
            x = x_next;
        }
        data.trajectories.push_back(std::move(tr));
    }
    return data;
}

TupleBatch extract_tuples(const Dataset& data, int batch, int h_max,
                          const GoalScheme& scheme, Rng& rng) {
    if (batch < 1) throw InvalidArgument("batch must be >= 1");
    if (h_max < 1) throw InvalidArgument("h_max must be >= 1");
    if (data.trajectories.empty()) throw InvalidArgument("empty dataset");
    for (const auto& tr : data.trajectories)
        if (tr.length() <= h_max)
            throw TrajectoryTooShort("trajectory length " + std::to_string(tr.length()) +
                                     " <= h_max " + std::to_string(h_max));

    const int n_traj = static_cast<int>(data.trajectories.size());
    TupleBatch out;
    out.s.resize(batch);
    out.u.resize(batch);
    out.h.resize(batch);
    out.s_next.resize(batch);
    out.g.resize(batch);

    for (int i = 0; i < batch; ++i) {
        const Trajectory& tr = data.trajectories[rng.uniform_int(n_traj)];
        const int len = tr.length();
        const int pos = rng.uniform_int(len - h_max + 1);  // keeps pos + h_max on the trajectory
        const int h = rng.uniform_int(h_max + 1);
        out.s[i] = tr.states[pos];
        out.u[i] = tr.states[pos + h];
        out.h[i] = h;
        out.s_next[i] = tr.states[pos + 1];

        if (rng.uniform() < scheme.future_weight) {
            const int k = rng.geometric(scheme.geometric_p);
            out.g[i] = tr.states[std::min(pos + k, len)];
        } else {
            const Trajectory& tg = data.trajectories[rng.uniform_int(n_traj)];
            out.g[i] = tg.states[rng.uniform_int(tg.length() + 1)];
        }
    }
    return out;
}

TupleBatch extract_tuples(const Dataset& data, int batch, int h_max,
                          const GoalScheme& scheme, std::uint64_t seed) {
    Rng rng(seed);
    return extract_tuples(data, batch, h_max, scheme, rng);
}

}  // namespace hitgeo
