#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hitgeo/nets.hpp"

using namespace hitgeo;

namespace {

// Plain-loop forward pass, independent of the Eigen path in the library.
std::vector<double> loop_forward(const DenseNet& net, const std::vector<double>& x) {
    std::vector<double> h = x;
    for (int l = 0; l < net.n_layers(); ++l) {
        const auto& W = net.weights[l];
        std::vector<double> z(W.rows(), 0.0);
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            double acc = net.biases[l][i];
            for (Eigen::Index j = 0; j < W.cols(); ++j) acc += W(i, j) * h[j];
            z[i] = acc;
        }
        if (l + 1 < net.n_layers())
            for (auto& v : z) v = v > 0.0 ? v : 0.0;  // relu
        h = std::move(z);
    }
    return h;
}

double net_l2_half(DenseNet& net, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                   NetGrads* grads) {
    NetTape tape;
    const Eigen::MatrixXd out = net_forward(net, Eigen::MatrixXd(x), grads ? &tape : nullptr);
    const Eigen::VectorXd diff = out.col(0) - y;
    if (grads) net_backward(net, tape, diff, *grads);
    return 0.5 * diff.squaredNorm();
}

}  // namespace

TEST_CASE("forward: zero weights reduce to the final bias") {
    DenseNet net = DenseNet::make({3, 4, 2}, Activation::relu, 1);
    for (auto& w : net.weights) w.setZero();
    net.biases[1] << -0.5, 2.25;
    const Eigen::VectorXd out = net_forward_vec(net, Eigen::Vector3d(1.0, -2.0, 3.0));
    CHECK(out[0] == -0.5);
    CHECK(out[1] == 2.25);
}

TEST_CASE("forward: single affine layer is a matrix-vector product") {
    DenseNet net = DenseNet::make({3, 2}, Activation::relu, 2);
    const Eigen::Vector3d x(0.3, -1.2, 0.7);
    const Eigen::VectorXd out = net_forward_vec(net, x);
    const Eigen::VectorXd expect = net.weights[0] * x + net.biases[0];
    CHECK((out - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: two-layer relu matches an independent loop evaluation") {
    DenseNet net = DenseNet::make({2, 3, 2}, Activation::relu, 3);
    net.weights[0] << 0.5, -1.0, 2.0, 0.25, -0.75, 1.5;
    net.biases[0] << 0.1, -0.2, 0.3;
    net.weights[1] << 1.0, -1.0, 0.5, 2.0, 0.0, -0.5;
    net.biases[1] << 0.0, 0.05;
    const std::vector<double> expect = loop_forward(net, {0.4, -0.6});
    const Eigen::VectorXd out = net_forward_vec(net, Eigen::Vector2d(0.4, -0.6));
    CHECK(out[0] == doctest::Approx(expect[0]).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(expect[1]).epsilon(1e-15));
}

TEST_CASE("forward: input guards") {
    DenseNet net = DenseNet::make({2, 2}, Activation::relu, 4);
    CHECK_THROWS_AS(net_forward_vec(net, Eigen::Vector3d(1, 2, 3)), ShapeMismatch);
    CHECK_THROWS_AS(
        net_forward_vec(net, Eigen::Vector2d(std::numeric_limits<double>::quiet_NaN(), 0)),
        NonFiniteInput);
}

TEST_CASE("backward: output-layer bias gradient of the l2 loss is the residual") {
    DenseNet net = DenseNet::make({2, 2}, Activation::relu, 5);
    NetGrads grads = NetGrads::zeros_like(net);
    const Eigen::Vector2d x(0.7, -0.3);
    NetTape tape;
    const Eigen::MatrixXd out = net_forward(net, Eigen::MatrixXd(x), &tape);
    net_backward(net, tape, out, grads);  // upstream = f(x), i.e. d(||f||^2/2)/df
    CHECK((grads.db[0] - out.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: finite differences confirm every parameter gradient") {
    for (auto act : {Activation::gelu, Activation::relu}) {
        DenseNet net = DenseNet::make({3, 5, 4, 2}, act, 6);
        const Eigen::Vector3d x(0.37, -0.81, 0.22);
        const Eigen::Vector2d y(0.5, -1.0);

        NetGrads grads = NetGrads::zeros_like(net);
        net_l2_half(net, x, y, &grads);

        std::vector<double*> ptrs;
        std::vector<std::string> names;
        collect_params(net, "net", ptrs, names);
        const GradReport report = grad_check(
            [&] { return net_l2_half(net, x, y, nullptr); }, ptrs, flatten_grads(grads), 1e-5,
            names);
        INFO("worst: ", report.worst_param);
        CHECK(report.max_rel_err < 1e-5);
    }
}

TEST_CASE("backward: zero upstream yields zero gradients; no tape throws") {
    DenseNet net = DenseNet::make({2, 3, 1}, Activation::gelu, 7);
    NetTape tape;
    net_forward(net, Eigen::MatrixXd(Eigen::Vector2d(1.0, 2.0)), &tape);
    NetGrads grads = NetGrads::zeros_like(net);
    net_backward(net, tape, Eigen::MatrixXd::Zero(1, 1), grads);
    for (const auto& g : grads.dW) CHECK(g.cwiseAbs().maxCoeff() == 0.0);

    NetTape empty;
    CHECK_THROWS_AS(net_backward(net, empty, Eigen::MatrixXd::Zero(1, 1), grads), NoTape);
}

TEST_CASE("opt_step: zero gradient is a fixed point") {
    DenseNet net = DenseNet::make({3, 3}, Activation::relu, 8);
    const std::vector<double> before = net.flatten_params();
    OptimizerState opt = OptimizerState::make(net, 1e-3);
    const NetGrads zero = NetGrads::zeros_like(net);
    opt_step(opt, net, zero);
    CHECK(net.flatten_params() == before);
}

TEST_CASE("opt_step: first step follows the bias-corrected closed form") {
    DenseNet net = DenseNet::make({2, 2}, Activation::relu, 9);
    const std::vector<double> before = net.flatten_params();
    OptimizerState opt = OptimizerState::make(net, 3e-4);
    NetGrads grads = NetGrads::zeros_like(net);
    grads.dW[0] << 0.5, -1.5, 2.0, -0.25;
    grads.db[0] << 1.0, -2.0;

    opt_step(opt, net, grads);
    const std::vector<double> after = net.flatten_params();
    const std::vector<double> g = flatten_grads(grads);
    for (std::size_t i = 0; i < after.size(); ++i) {
        // With bias correction at t = 1, m_hat = g and v_hat = g^2.
        const double expect = before[i] - 3e-4 * g[i] / (std::abs(g[i]) + 1e-8);
        CHECK(after[i] == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(opt.step == 1);
}

TEST_CASE("opt_step: identical runs stay bitwise identical") {
    auto run = [] {
        DenseNet net = DenseNet::make({3, 4, 2}, Activation::gelu, 10);
        OptimizerState opt = OptimizerState::make(net, 1e-3);
        Rng rng(11);
        for (int step = 0; step < 25; ++step) {
            Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
            Eigen::Vector2d y(rng.normal(), rng.normal());
            NetGrads grads = NetGrads::zeros_like(net);
            NetTape tape;
            const Eigen::MatrixXd out = net_forward(net, Eigen::MatrixXd(x), &tape);
            net_backward(net, tape, out.col(0) - y, grads);
            opt_step(opt, net, grads);
        }
        return net.flatten_params();
    };
    CHECK(run() == run());
}

TEST_CASE("opt_step: shape mismatch rejected") {
    DenseNet net = DenseNet::make({2, 2}, Activation::relu, 12);
    OptimizerState opt = OptimizerState::make(net, 1e-3);
    DenseNet other = DenseNet::make({2, 3, 2}, Activation::relu, 12);
    const NetGrads wrong = NetGrads::zeros_like(other);
    CHECK_THROWS_AS(opt_step(opt, net, wrong), ShapeMismatch);
}

TEST_CASE("grad_check: exact on quadratics, zero on untouched coordinates") {
    std::vector<double> p{0.5, -1.0, 2.0};
    const std::vector<double> center{1.0, 2.0, -0.5};
    auto loss = [&] {
        // Quadratic in p[0], p[1]; independent of p[2].
        return 0.5 * (3.0 * (p[0] - center[0]) * (p[0] - center[0]) +
                      0.7 * (p[1] - center[1]) * (p[1] - center[1]));
    };
    const std::vector<double> analytic{3.0 * (p[0] - center[0]), 0.7 * (p[1] - center[1]), 0.0};
    std::vector<double*> ptrs{&p[0], &p[1], &p[2]};
    const GradReport report = grad_check(loss, ptrs, analytic, 1e-5);
    CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("polyak_update: convex blend of parameters") {
    DenseNet a = DenseNet::make({2, 2}, Activation::relu, 13);
    DenseNet b = DenseNet::make({2, 2}, Activation::relu, 14);
    const Eigen::MatrixXd wa = a.weights[0], wb = b.weights[0];
    polyak_update(a, b, 0.25);
    CHECK((a.weights[0] - (0.75 * wa + 0.25 * wb)).cwiseAbs().maxCoeff() < 1e-15);
}
