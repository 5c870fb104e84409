#include "hitgeo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace hitgeo {

namespace {

constexpr double kSingularTol = 1e-10;
constexpr int kMaxStates = 4096;

Eigen::MatrixXd delete_goal(const Eigen::MatrixXd& P, int goal) {
    const int n = static_cast<int>(P.rows());
    Eigen::MatrixXd Q(n - 1, n - 1);
    for (int i = 0, qi = 0; i < n; ++i) {
        if (i == goal) continue;
        for (int j = 0, qj = 0; j < n; ++j) {
            if (j == goal) continue;
            Q(qi, qj) = P(i, j);
            ++qj;
        }
        ++qi;
    }
    return Q;
}

// LU solve with a singularity gate and one iterative-refinement pass; this is
// an oracle, so residuals should sit at machine level.
Eigen::VectorXd gated_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(min_pivot > kSingularTol))
        throw GoalUnreachable("I - P_Q singular within tolerance (pivot " +
                              std::to_string(min_pivot) + ")");
    Eigen::VectorXd x = lu.solve(b);
    x += lu.solve(b - A * x);
    if (!x.allFinite()) throw GoalUnreachable("non-finite solve");
    return x;
}

void check_goal(const MarkovChain& chain, int goal) {
    const int n = static_cast<int>(chain.P.rows());
    if (n < 2 || n != chain.P.cols()) throw ShapeMismatch("chain must be square, n >= 2");
    if (n > kMaxStates) throw InvalidArgument("chain exceeds the 4096-state cap");
    if (goal < 0 || goal >= n) throw InvalidArgument("goal out of range");
}

}  // namespace

MarkovChain induce_chain(const FiniteCMP& env, const TabularPolicy& policy) {
    if (policy.probs.rows() != env.n_states || policy.probs.cols() != env.n_actions)
        throw ShapeMismatch("policy does not match environment");
    MarkovChain chain;
    chain.P = Eigen::MatrixXd::Zero(env.n_states, env.n_states);
    for (int a = 0; a < env.n_actions; ++a)
        chain.P += policy.probs.col(a).asDiagonal() * env.kernel[a];
    return chain;
}

HittingTable solve_hitting_times(const MarkovChain& chain, int goal) {
    check_goal(chain, goal);
    const int n = static_cast<int>(chain.P.rows());
    const Eigen::MatrixXd P_Q = delete_goal(chain.P, goal);
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n - 1, n - 1) - P_Q;
    const Eigen::VectorXd v_Q = gated_solve(A, Eigen::VectorXd::Ones(n - 1));

    HittingTable table;
    table.goal = goal;
    table.v = Eigen::VectorXd::Zero(n);
    for (int x = 0, q = 0; x < n; ++x)
        if (x != goal) table.v[x] = v_Q[q++];
    return table;
}

TransientOperator transient_operator(const MarkovChain& chain, int goal) {
    check_goal(chain, goal);
    TransientOperator op;
    op.goal = goal;
    op.P_Q = delete_goal(chain.P, goal);

    const int m = static_cast<int>(op.P_Q.rows());
    if (m == 1) {
        op.rho = op.P_Q(0, 0);
        return op;
    }

    Eigen::VectorXd x = Eigen::VectorXd::Ones(m);
    double lambda = 0.0;
    bool converged = false;
    for (int it = 0; it < 100000; ++it) {
        Eigen::VectorXd y = op.P_Q * x;
        const double ny = y.norm();
        if (ny == 0.0) {  // nilpotent: P_Q^k 1 = 0 forces P_Q^k = 0
            op.rho = 0.0;
            return op;
        }
        const double estimate = ny / x.norm();
        if (it > 0 && std::abs(estimate - lambda) <= 1e-10 * std::max(estimate, 1e-30)) {
            lambda = estimate;
            converged = true;
            break;
        }
        lambda = estimate;
        x = y / ny;
    }
    if (!converged && m <= 64) {
        const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(op.P_Q, false).eigenvalues();
        lambda = eig.cwiseAbs().maxCoeff();
    }
    op.rho = lambda;
    return op;
}

Representer solve_representer(const MarkovChain& chain, int goal) {
    check_goal(chain, goal);
    const int n = static_cast<int>(chain.P.rows());
    const Eigen::MatrixXd P_Q = delete_goal(chain.P, goal);

    // Adjoint route: with one-hot features the latent transition operator is
    // P^T, its transient compression P_Q^T, and the unit-cost representer the
    // all-ones vector, so (T_Q - I)* omega_Q = 1 reads (P_Q - I) omega_Q = 1.
    const Eigen::MatrixXd A = P_Q - Eigen::MatrixXd::Identity(n - 1, n - 1);
    const Eigen::VectorXd omega_Q = gated_solve(A, Eigen::VectorXd::Ones(n - 1));

    Representer rep;
    rep.goal = goal;
    rep.omega = Eigen::VectorXd::Zero(n);
    for (int x = 0, q = 0; x < n; ++x)
        if (x != goal) rep.omega[x] = omega_Q[q++];

    const double residual = (A * omega_Q - Eigen::VectorXd::Ones(n - 1)).cwiseAbs().maxCoeff();
    if (residual > 1e-6) throw GoalUnreachable("adjoint residual " + std::to_string(residual));
    return rep;
}

double representer_readout(const Representer& rep, int x) {
    // <e_g - e_x, omega> with the omega[goal] = 0 gauge.
    return rep.omega[rep.goal] - rep.omega[x];
}

BoundReport verify_error_bound(const MarkovChain& chain, int goal, double epsilon,
                               int trials, std::uint64_t seed) {
    check_goal(chain, goal);
    if (epsilon < 0.0) throw InvalidArgument("epsilon must be >= 0");
    if (trials < 1) throw InvalidArgument("trials must be >= 1");

    const int n = static_cast<int>(chain.P.rows());
    const int m = n - 1;
    const HittingTable exact = solve_hitting_times(chain, goal);
    const TransientOperator top = transient_operator(chain, goal);
    const Eigen::MatrixXd I_m = Eigen::MatrixXd::Identity(m, m);

    // ||(I - P_Q)^{-1}||_inf computed from the explicit inverse; the oracle
    // stays at dimensions where this is cheap.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(I_m - top.P_Q);
    const Eigen::MatrixXd resolvent = lu.solve(I_m);
    const double resolvent_inf = resolvent.cwiseAbs().rowwise().sum().maxCoeff();

    BoundReport report;
    report.epsilon = epsilon;
    report.rho = top.rho;
    report.c_h = resolvent_inf * (1.0 - top.rho);
    report.trials = trials;

    Eigen::VectorXd v_Q(m);
    for (int x = 0, q = 0; x < n; ++x)
        if (x != goal) v_Q[q++] = exact.v[x];

    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
        // Columnwise perturbation of the latent transition operator: every
        // state's one-step latent error has norm exactly epsilon.
        Eigen::MatrixXd E_Q(m, m);
        for (int c = 0; c < m; ++c) {
            Eigen::VectorXd dir(m);
            for (int r = 0; r < m; ++r) dir[r] = rng.normal();
            const double norm = dir.norm();
            E_Q.col(c) = norm > 0.0 ? Eigen::VectorXd(dir * (epsilon / norm))
                                    : Eigen::VectorXd::Zero(m);
        }

        // Perturbed adjoint system: ((P_Q^T + E_Q)^T - I) w = 1.
        const Eigen::MatrixXd A_hat = top.P_Q + E_Q.transpose() - I_m;
        Eigen::VectorXd omega_hat;
        try {
            omega_hat = gated_solve(A_hat, Eigen::VectorXd::Ones(m));
        } catch (const GoalUnreachable&) {
            continue;  // perturbation destroyed solvability; no representer to test
        }

        const double sup_error = (v_Q + omega_hat).cwiseAbs().maxCoeff();  // readout is -omega
        const double bound = report.c_h * omega_hat.norm() * epsilon / (1.0 - top.rho);
        if (sup_error > bound + 1e-9) report.all_ok = false;
        if (sup_error >= report.sup_error) {
            report.sup_error = sup_error;
            report.bound = bound;
        }
    }
    return report;
}

DisplacementFit fit_displacement_map(const Eigen::MatrixXd& phi_a,
                                     const Eigen::MatrixXd& phi_b, int x0,
                                     const std::vector<int>& states) {
    if (phi_a.cols() != phi_b.cols()) throw ShapeMismatch("state counts differ");
    if (x0 < 0 || x0 >= phi_a.cols()) throw InvalidArgument("x0 out of range");
    if (static_cast<Eigen::Index>(states.size()) < phi_b.rows())
        throw InvalidArgument("need at least latent-dim states");

    const int m = static_cast<int>(states.size());
    Eigen::MatrixXd A(phi_a.rows(), m), B(phi_b.rows(), m);
    for (int i = 0; i < m; ++i) {
        const int g = states[i];
        if (g < 0 || g >= phi_a.cols()) throw InvalidArgument("state out of range");
        A.col(i) = phi_a.col(g) - phi_a.col(x0);
        B.col(i) = phi_b.col(g) - phi_b.col(x0);
    }

    // min_M ||M A - B||_F via the transposed least-squares problem.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A.transpose());
    cod.setThreshold(1e-10);

    DisplacementFit fit;
    fit.M = cod.solve(B.transpose()).transpose();
    fit.rank_deficient = cod.rank() < phi_a.rows();
    const double target = B.squaredNorm();
    fit.residual = target > 0.0 ? (fit.M * A - B).squaredNorm() / target : 0.0;
    return fit;
}

CapacityReport check_sufficient_capacity(const FiniteCMP& env, const TabularPolicy& policy,
                                         const Eigen::MatrixXd& phi) {
    if (phi.cols() != env.n_states) throw ShapeMismatch("phi must have one column per state");
    const MarkovChain chain = induce_chain(env, policy);
    const Eigen::MatrixXd Y = phi * chain.P.transpose();  // col x = E[phi(x') | x]

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(phi.transpose());
    cod.setThreshold(1e-10);

    CapacityReport report;
    report.T = cod.solve(Y.transpose()).transpose();
    report.eps_hat = (Y - report.T * phi).colwise().norm().maxCoeff();
    report.degenerate =
        (phi.colwise() - phi.col(0)).colwise().norm().maxCoeff() < 1e-12;
    return report;
}

McHitting mc_hitting_time(const MarkovChain& chain, int start, int goal, int episodes,
                          std::uint64_t seed) {
    check_goal(chain, goal);
    if (start < 0 || start >= chain.P.rows()) throw InvalidArgument("start out of range");
    const int n = static_cast<int>(chain.P.rows());
    constexpr long kStepCap = 100000000;

    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<std::vector<double>> rows(n, std::vector<double>(n));
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) rows[x][y] = chain.P(x, y);

    for (int e = 0; e < episodes; ++e) {
        int x = start;
        long t = 0;
        while (x != goal && t < kStepCap) {
            const double u = rng.uniform();
            double acc = 0.0;
            int next = n - 1;
            for (int y = 0; y < n; ++y) {
                acc += rows[x][y];
                if (u < acc) {
                    next = y;
                    break;
                }
            }
            x = next;
            ++t;
        }
        sum += static_cast<double>(t);
        sum_sq += static_cast<double>(t) * static_cast<double>(t);
    }

    McHitting mc;
    mc.episodes = episodes;
    mc.mean = sum / episodes;
    const double var = std::max(0.0, sum_sq / episodes - mc.mean * mc.mean);
    mc.stderr_mean = std::sqrt(var / episodes);
    return mc;
}

}  // namespace hitgeo
