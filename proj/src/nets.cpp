#include "hitgeo/nets.hpp"

#include <algorithm>
#include <cmath>

namespace hitgeo {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244008443621048;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;

double act_value(Activation act, double x) {
    switch (act) {
        case Activation::relu:
            return x > 0.0 ? x : 0.0;
        case Activation::gelu:
            return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return 0.0;
}

double act_deriv(Activation act, double x) {
    switch (act) {
        case Activation::relu:
            return x > 0.0 ? 1.0 : 0.0;
        case Activation::gelu:
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    }
    return 0.0;
}

}  // namespace

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    throw InvalidArgument("unknown activation '" + s + "'");
}

std::string activation_to_string(Activation a) {
    return a == Activation::relu ? "relu" : "gelu";
}

DenseNet DenseNet::make(const std::vector<int>& dims, Activation act, std::uint64_t seed) {
    if (dims.size() < 2) throw InvalidArgument("DenseNet needs at least input and output dims");
    for (int d : dims)
        if (d < 1) throw InvalidArgument("layer dims must be positive");

    DenseNet net;
    net.layer_dims = dims;
    net.activation = act;
    net.init_seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int j = 0; j < fan_in; ++j)
            for (int i = 0; i < fan_out; ++i) w(i, j) = rng.uniform(-scale, scale);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

std::size_t DenseNet::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size()) + static_cast<std::size_t>(biases[l].size());
    return n;
}

std::vector<double> DenseNet::flatten_params() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.insert(flat.end(), weights[l].data(), weights[l].data() + weights[l].size());
        flat.insert(flat.end(), biases[l].data(), biases[l].data() + biases[l].size());
    }
    return flat;
}

void DenseNet::unflatten_params(const std::vector<double>& flat) {
    if (flat.size() != param_count()) throw ShapeMismatch("flat parameter size");
    std::size_t off = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        std::copy_n(flat.data() + off, weights[l].size(), weights[l].data());
        off += weights[l].size();
        std::copy_n(flat.data() + off, biases[l].size(), biases[l].data());
        off += biases[l].size();
    }
}

NetGrads NetGrads::zeros_like(const DenseNet& net) {
    NetGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.dW.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.db.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

void NetGrads::set_zero() {
    for (auto& w : dW) w.setZero();
    for (auto& b : db) b.setZero();
}

Eigen::MatrixXd net_forward(const DenseNet& net, const Eigen::MatrixXd& x, NetTape* tape) {
    if (x.rows() != net.input_dim()) throw ShapeMismatch("forward input dimension");
    if (!x.allFinite()) throw NonFiniteInput("forward input");

    if (tape) {
        tape->input = x;
        tape->pre.clear();
        tape->post.clear();
        tape->recorded = true;
    }

    Eigen::MatrixXd h = x;
    const int L = net.n_layers();
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = net.weights[l] * h;
        z.colwise() += net.biases[l];
        if (tape) tape->pre.push_back(z);
        if (l + 1 < L) {
            h = z.unaryExpr([&](double v) { return act_value(net.activation, v); });
        } else {
            h = std::move(z);
        }
        if (tape) tape->post.push_back(h);
    }
    return h;
}

Eigen::VectorXd net_forward_vec(const DenseNet& net, const Eigen::VectorXd& x) {
    return net_forward(net, Eigen::MatrixXd(x), nullptr).col(0);
}

Eigen::MatrixXd net_backward(const DenseNet& net, const NetTape& tape,
                             const Eigen::MatrixXd& upstream, NetGrads& grads) {
    if (!tape.recorded) throw NoTape("backward without a recorded forward pass");
    const int L = net.n_layers();
    if (static_cast<int>(tape.pre.size()) != L) throw NoTape("tape does not match the net");
    if (upstream.rows() != net.output_dim() || upstream.cols() != tape.input.cols())
        throw ShapeMismatch("upstream cotangent");
    if (static_cast<int>(grads.dW.size()) != L) throw ShapeMismatch("gradient accumulator");

    Eigen::MatrixXd delta = upstream;  // d loss / d pre-activation of layer l
    for (int l = L - 1; l >= 0; --l) {
        const Eigen::MatrixXd& below = l > 0 ? tape.post[l - 1] : tape.input;
        grads.dW[l] += delta * below.transpose();
        grads.db[l] += delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = net.weights[l].transpose() * delta;
            const Eigen::MatrixXd& z = tape.pre[l - 1];
            delta = back.binaryExpr(z, [&](double g, double zz) {
                return g * act_deriv(net.activation, zz);
            });
        } else {
            return net.weights[0].transpose() * delta;
        }
    }
    return Eigen::MatrixXd();  // unreachable
}

OptimizerState OptimizerState::make(const DenseNet& net, double lr) {
    OptimizerState s;
    s.learning_rate = lr;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        s.mW.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        s.vW.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        s.mb.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        s.vb.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return s;
}

void opt_step(OptimizerState& state, DenseNet& net, const NetGrads& grads) {
    if (state.mW.size() != net.weights.size() || grads.dW.size() != net.weights.size())
        throw ShapeMismatch("optimizer/net/grads layer counts");
    for (std::size_t l = 0; l < net.weights.size(); ++l)
        if (grads.dW[l].rows() != net.weights[l].rows() ||
            grads.dW[l].cols() != net.weights[l].cols() ||
            grads.db[l].size() != net.biases[l].size())
            throw ShapeMismatch("gradient shape at layer " + std::to_string(l));

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        state.mW[l] = state.beta1 * state.mW[l] + (1.0 - state.beta1) * grads.dW[l];
        state.vW[l] = state.beta2 * state.vW[l] +
                      (1.0 - state.beta2) * grads.dW[l].array().square().matrix();
        net.weights[l].array() -= state.learning_rate * (state.mW[l].array() / bc1) /
                                  ((state.vW[l].array() / bc2).sqrt() + state.eps_stab);
        state.mb[l] = state.beta1 * state.mb[l] + (1.0 - state.beta1) * grads.db[l];
        state.vb[l] = state.beta2 * state.vb[l] +
                      (1.0 - state.beta2) * grads.db[l].array().square().matrix();
        net.biases[l].array() -= state.learning_rate * (state.mb[l].array() / bc1) /
                                 ((state.vb[l].array() / bc2).sqrt() + state.eps_stab);
    }
}

void polyak_update(DenseNet& target, const DenseNet& online, double tau) {
    if (target.layer_dims != online.layer_dims) throw ShapeMismatch("polyak nets differ");
    for (std::size_t l = 0; l < target.weights.size(); ++l) {
        target.weights[l] = (1.0 - tau) * target.weights[l] + tau * online.weights[l];
        target.biases[l] = (1.0 - tau) * target.biases[l] + tau * online.biases[l];
    }
}

GradReport grad_check(const std::function<double()>& loss,
                      const std::vector<double*>& params,
                      const std::vector<double>& analytic,
                      double step,
                      const std::vector<std::string>& names,
                      std::uint64_t seed,
                      std::size_t max_coords) {
    if (params.size() != analytic.size()) throw ShapeMismatch("params vs analytic grads");
    if (!names.empty() && names.size() != params.size())
        throw ShapeMismatch("params vs names");

    std::vector<std::size_t> order(params.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (params.size() > max_coords) {
        Rng rng(seed);
        for (std::size_t i = 0; i < max_coords; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(
                                          static_cast<int>(order.size() - i)));
            std::swap(order[i], order[j]);
        }
        order.resize(max_coords);
    }

    GradReport report;
    for (std::size_t idx : order) {
        double* p = params[idx];
        const double saved = *p;
        *p = saved + step;
        const double up = loss();
        *p = saved - step;
        const double down = loss();
        *p = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double a = analytic[idx];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_param = names.empty() ? "param[" + std::to_string(idx) + "]" : names[idx];
        }
    }
    return report;
}

void collect_params(DenseNet& net, const std::string& prefix,
                    std::vector<double*>& ptrs, std::vector<std::string>& names) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto& w = net.weights[l];
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                ptrs.push_back(&w(i, j));
                names.push_back(prefix + ".W" + std::to_string(l) + "[" + std::to_string(i) +
                                "," + std::to_string(j) + "]");
            }
        auto& b = net.biases[l];
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            ptrs.push_back(&b(i));
            names.push_back(prefix + ".b" + std::to_string(l) + "[" + std::to_string(i) + "]");
        }
    }
}

std::vector<double> flatten_grads(const NetGrads& grads) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < grads.dW.size(); ++l) {
        flat.insert(flat.end(), grads.dW[l].data(), grads.dW[l].data() + grads.dW[l].size());
        flat.insert(flat.end(), grads.db[l].data(), grads.db[l].data() + grads.db[l].size());
    }
    return flat;
}

}  // namespace hitgeo
