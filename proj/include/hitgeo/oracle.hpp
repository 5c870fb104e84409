#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hitgeo/cmp.hpp"
#include "hitgeo/errors.hpp"

namespace hitgeo {

// Closed-form ground truth on the policy-induced chain: hitting times from
// the Poisson equation, transient spectral radii, adjoint-system representers
// on one-hot features, and the perturbation machinery used to check the
// effective-horizon error bound against exact linear algebra.

struct MarkovChain {
    Eigen::MatrixXd P;  // row-stochastic
};

MarkovChain induce_chain(const FiniteCMP& env, const TabularPolicy& policy);

struct HittingTable {
    Eigen::VectorXd v;  // expected steps to `goal`; v[goal] = 0
    int goal = 0;
};

// Solves (I - P_Q) v_Q = 1 by partial-pivoted LU with one step of iterative
// refinement. Throws GoalUnreachable when I - P_Q is singular within 1e-10.
HittingTable solve_hitting_times(const MarkovChain& chain, int goal);

struct TransientOperator {
    Eigen::MatrixXd P_Q;  // goal row and column deleted
    int goal = 0;
    double rho = 0.0;     // spectral radius
};

// rho via power iteration (all-ones start, relative tolerance 1e-10, 1e5 cap)
// with a dense eigensolve fallback for dimension <= 64; nilpotent chains are
// detected exactly when the iterate collapses to zero.
TransientOperator transient_operator(const MarkovChain& chain, int goal);

struct Representer {
    Eigen::VectorXd omega;  // gauge omega[goal] = 0
    int goal = 0;
};

// Solves the adjoint system (P_Q - I) omega_Q = 1 directly; on one-hot
// features the readout <e_g - e_x, omega> then equals the hitting time.
Representer solve_representer(const MarkovChain& chain, int goal);

double representer_readout(const Representer& rep, int x);

struct BoundReport {
    double epsilon = 0.0;
    double sup_error = 0.0;  // max over trials
    double bound = 0.0;      // bound of the worst trial
    double c_h = 0.0;        // ||(I - P_Q)^{-1}||_inf * (1 - rho)
    double rho = 0.0;
    int trials = 0;
    bool all_ok = true;      // sup_error <= bound + 1e-9 in every trial
};

// Perturbs the one-hot latent transition operator columnwise by random
// directions of norm epsilon, re-solves the adjoint system, and checks the
// perturbed readout against the exact hitting table.
BoundReport verify_error_bound(const MarkovChain& chain, int goal, double epsilon,
                               int trials, std::uint64_t seed);

struct DisplacementFit {
    Eigen::MatrixXd M;        // least-squares map between displacement spans
    double residual = 0.0;    // relative to the total target displacement mass
    bool rank_deficient = false;
};

// Embedding matrices hold one state per column. The fit minimizes
// sum_g || M (phi_a(g) - phi_a(x0)) - (phi_b(g) - phi_b(x0)) ||^2.
DisplacementFit fit_displacement_map(const Eigen::MatrixXd& phi_a,
                                     const Eigen::MatrixXd& phi_b, int x0,
                                     const std::vector<int>& states);

struct CapacityReport {
    double eps_hat = 0.0;     // max one-step latent transition residual
    bool degenerate = false;  // constant feature map: zero residual, useless readout
    Eigen::MatrixXd T;        // fitted latent transition operator
};

CapacityReport check_sufficient_capacity(const FiniteCMP& env, const TabularPolicy& policy,
                                         const Eigen::MatrixXd& phi);

// Monte Carlo hitting-time mean and its standard error from `episodes`
// simulated first-passage runs; the independent oracle for the Poisson solve.
struct McHitting {
    double mean = 0.0;
    double stderr_mean = 0.0;
    int episodes = 0;
};

McHitting mc_hitting_time(const MarkovChain& chain, int start, int goal, int episodes,
                          std::uint64_t seed);

}  // namespace hitgeo
