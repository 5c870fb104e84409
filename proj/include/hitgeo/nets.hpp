#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hitgeo/errors.hpp"
#include "hitgeo/rng.hpp"

namespace hitgeo {

// Dense feed-forward nets in 64-bit floats with explicit reverse-mode
// gradients. Everything is deterministic given (seed, inputs); batch
// reductions run in fixed order.

enum class Activation { relu, gelu };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

struct DenseNet {
    std::vector<int> layer_dims;            // input, hidden..., output
    std::vector<Eigen::MatrixXd> weights;   // weights[l]: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    Activation activation = Activation::relu;
    std::uint64_t init_seed = 0;

    // Uniform fan-in init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias.
    static DenseNet make(const std::vector<int>& dims, Activation act, std::uint64_t seed);

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int n_layers() const { return static_cast<int>(weights.size()); }
    std::size_t param_count() const;

    std::vector<double> flatten_params() const;
    void unflatten_params(const std::vector<double>& flat);
};

// Activations recorded by a forward pass; required by net_backward.
struct NetTape {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;  // post-activation per layer (last = output)
    bool recorded = false;
};

struct NetGrads {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;

    static NetGrads zeros_like(const DenseNet& net);
    void set_zero();
};

// Hidden layers apply the activation; the output layer is affine. Columns are
// batch elements. Throws NonFiniteInput on non-finite x, ShapeMismatch on a
// wrong input dimension.
Eigen::MatrixXd net_forward(const DenseNet& net, const Eigen::MatrixXd& x,
                            NetTape* tape = nullptr);
Eigen::VectorXd net_forward_vec(const DenseNet& net, const Eigen::VectorXd& x);

// Accumulates parameter gradients into `grads` and returns the input
// cotangent. Throws NoTape unless `tape` holds a recorded forward pass.
Eigen::MatrixXd net_backward(const DenseNet& net, const NetTape& tape,
                             const Eigen::MatrixXd& upstream, NetGrads& grads);

// Bias-corrected adaptive-moment update (Adam).
struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_stab = 1e-8;

    static OptimizerState make(const DenseNet& net, double lr);
};

void opt_step(OptimizerState& state, DenseNet& net, const NetGrads& grads);

// Polyak average: target <- (1 - tau) * target + tau * online.
void polyak_update(DenseNet& target, const DenseNet& online, double tau);

struct GradReport {
    double max_rel_err = 0.0;
    std::string worst_param;
};

// Central-difference check of `analytic` against `loss` re-evaluated while
// coordinates behind `params` are nudged by +-step. Above max_coords
// coordinates a seeded random subset is checked.
GradReport grad_check(const std::function<double()>& loss,
                      const std::vector<double*>& params,
                      const std::vector<double>& analytic,
                      double step,
                      const std::vector<std::string>& names = {},
                      std::uint64_t seed = 0,
                      std::size_t max_coords = 10000);

// Parameter pointers and human-readable names, in flatten_params order.
void collect_params(DenseNet& net, const std::string& prefix,
                    std::vector<double*>& ptrs, std::vector<std::string>& names);
std::vector<double> flatten_grads(const NetGrads& grads);

}  // namespace hitgeo
