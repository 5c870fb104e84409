#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hitgeo/cmp.hpp"
#include "hitgeo/nets.hpp"

namespace hitgeo {

struct TrainConfig {
    double gamma = 0.99;       // discount
    double tau_v = 0.95;       // value expectile
    double tau_h = 0.5;        // hitting-time expectile
    double beta = 0.1;         // topological-consistency temperature
    double kappa = 1.0;        // topological-consistency coefficient
    int h_max = 10;
    int latent_dim = 32;
    double temp_nce = 0.1;
    double aug_sigma = 0.1;
    std::array<int, 3> phase_steps{200, 4800, 5000};
    int batch = 256;
    double lr = 3e-4;
    double target_tau = 0.005;  // Polyak coefficient
    double actor_temp = 10.0;
    std::uint64_t seed = 0;

    // Desk-scale artifact knobs.
    std::vector<int> hidden_dims{64, 64};
    Activation activation = Activation::relu;
    GoalScheme goal_scheme;
    bool coord_features = false;  // one-hot by default

    void validate() const;
};

// State featurization fed to the encoders: one-hot over state indices, or the
// 2-D grid coordinates when available.
struct Featurizer {
    int n_states = 0;
    bool use_coords = false;
    std::vector<std::array<double, 2>> coords;

    static Featurizer make(const FiniteCMP& env, bool use_coords);
    int dim() const { return use_coords ? 2 : n_states; }
    Eigen::VectorXd operator()(int s) const;
    Eigen::MatrixXd batch(const std::vector<int>& states) const;
};

struct TaskEncoder {
    DenseNet net;
    bool frozen = false;
};

struct StateEncoder {
    DenseNet net;
    DenseNet target;  // Polyak-averaged copy used for the Bellman bootstrap
    bool frozen = false;
};

struct LatentPolicy {
    DenseNet net;  // (state features ++ latent direction z) -> action logits
    bool frozen = false;
};

struct LossBreakdown {
    double td_term = 0.0;   // mean(w * delta^2)
    double hit_term = 0.0;  // mean(kappa * w' * ell^2)
    double total = 0.0;
    double mean_cos = 0.0;       // mean online-side cos(xi)
    double mean_distance = 0.0;  // mean online directed score
};

// Directed score d(s -> t | g): ||phi_t - phi_s|| * exp(beta * (1 - cos xi))
// with cos xi measured against omega_g; beta = 0 collapses to the Euclidean
// latent distance.
double directed_score(const Eigen::VectorXd& phi_s, const Eigen::VectorXd& phi_t,
                      const Eigen::VectorXd& omega_g, double beta);
double directed_score_displacement(const Eigen::VectorXd& displacement,
                                   const Eigen::VectorXd& omega_g, double beta);

// Discounted hitting-time label (1 - gamma^h) / (1 - gamma).
double discounted_hitting_label(int h, double gamma);

double expectile_weight(double tau, double residual);

// InfoNCE over goal features: embeds the batch and a Gaussian-augmented view,
// L2-normalizes both, and scores the diagonal against row-wise softmaxes of
// the similarity matrix. Accumulates gradients into `grads` when given.
double nce_loss(TaskEncoder& enc, const Eigen::MatrixXd& goal_feats, double temp_nce,
                double aug_sigma, Rng& rng, NetGrads* grads);

// Algorithm core: TD expectile term on the directed score plus expectile
// regression of observed temporal gaps onto the task-identifier projection.
// Gradients flow only through the online state encoder.
LossBreakdown emb_loss(StateEncoder& phi, const TaskEncoder& task, const TupleBatch& batch,
                       const Featurizer& feat, const TrainConfig& cfg, NetGrads* grads);

// Advantage-weighted regression on the intrinsic reward r_z(x, x') =
// <phi(x') - phi(x), z> with the one-step latent-linear baseline
// V_z(x) = <phi(x), z>; weights clipped at 100.
double policy_loss(LatentPolicy& policy, const StateEncoder& phi,
                   const std::vector<int>& s, const std::vector<int>& a,
                   const std::vector<int>& s_next, const Eigen::MatrixXd& z,
                   const Featurizer& feat, const TrainConfig& cfg, NetGrads* grads);

enum class ActMode { greedy, sample };

int act(const LatentPolicy& policy, const Eigen::VectorXd& x_feat, Eigen::VectorXd z,
        ActMode mode, Rng* rng);

enum class Phase { task = 0, embedding = 1, policy = 2 };

struct TrainState {
    TaskEncoder task;
    StateEncoder phi;
    LatentPolicy policy;
    OptimizerState opt_task, opt_phi, opt_policy;
    Featurizer feat;
    int n_actions = 0;
    int phase_done = -1;  // highest completed phase
};

TrainState make_train_state(const FiniteCMP& env, const TrainConfig& cfg);

struct StepLog {
    int step = 0;
    double td_term = 0.0;
    double hit_term = 0.0;
    double nce = 0.0;
    double policy = 0.0;
    double wall_ms = 0.0;
};

// Runs phase_steps[phase] optimizer steps on fresh tuple batches; phases must
// run in order and freeze their nets at the boundary.
std::vector<StepLog> train_phase(Phase phase, TrainState& state, const Dataset& data,
                                 const TrainConfig& cfg);

// Uniform draw on the unit sphere in latent space.
Eigen::VectorXd random_unit_vector(int dim, Rng& rng);

}  // namespace hitgeo
