#pragma once

// Shared fixtures for the unit and acceptance suites: small random training
// setups and finite-difference runners for the three loss gradients.

#include <string>
#include <vector>

#include "hitgeo/cmp.hpp"
#include "hitgeo/nets.hpp"
#include "hitgeo/oracle.hpp"
#include "hitgeo/train.hpp"

namespace hitgeo::testing {

struct LossFixture {
    FiniteCMP env;
    Dataset data;
    Featurizer feat;
    TrainConfig cfg;
};

inline LossFixture make_loss_fixture(std::uint64_t seed) {
    Rng rng(seed);
    LossFixture fx;
    fx.env = make_random_digraph_cmp(4 + rng.uniform_int(4), 2 + rng.uniform_int(2),
                                     1 + rng.uniform_int(2), 1234 + seed);
    fx.data = sample_trajectories(fx.env, uniform_policy(fx.env), 6, 24, seed);
    fx.cfg.latent_dim = 3 + rng.uniform_int(3);
    fx.cfg.hidden_dims = {5 + rng.uniform_int(4)};
    fx.cfg.activation = rng.uniform() < 0.5 ? Activation::gelu : Activation::relu;
    fx.cfg.batch = 6;
    fx.cfg.h_max = 4;
    fx.cfg.beta = 0.05 + 0.2 * rng.uniform();
    fx.cfg.tau_v = 0.6 + 0.3 * rng.uniform();
    fx.cfg.tau_h = 0.3 + 0.4 * rng.uniform();
    fx.cfg.kappa = 0.5 + rng.uniform();
    fx.cfg.seed = seed;
    fx.feat = Featurizer::make(fx.env, false);
    return fx;
}

// Central-difference check of the embedding loss over the online encoder.
inline double emb_grad_max_rel_err(std::uint64_t seed) {
    LossFixture fx = make_loss_fixture(seed);
    StateEncoder phi;
    phi.net = DenseNet::make({fx.feat.dim(), fx.cfg.hidden_dims[0], fx.cfg.latent_dim},
                             fx.cfg.activation, 10 + seed);
    phi.target = DenseNet::make({fx.feat.dim(), fx.cfg.hidden_dims[0], fx.cfg.latent_dim},
                                fx.cfg.activation, 20 + seed);  // distinct bootstrap side
    TaskEncoder task;
    task.net = DenseNet::make({fx.feat.dim(), fx.cfg.hidden_dims[0], fx.cfg.latent_dim},
                              fx.cfg.activation, 30 + seed);
    task.frozen = true;

    TupleBatch batch = extract_tuples(fx.data, fx.cfg.batch, fx.cfg.h_max, fx.cfg.goal_scheme,
                                      std::uint64_t(40 + seed));
    batch.g[0] = batch.s[0];  // exercise the goal boundary branch

    NetGrads grads = NetGrads::zeros_like(phi.net);
    emb_loss(phi, task, batch, fx.feat, fx.cfg, &grads);

    std::vector<double*> ptrs;
    std::vector<std::string> names;
    collect_params(phi.net, "phi", ptrs, names);
    const GradReport report = grad_check(
        [&] { return emb_loss(phi, task, batch, fx.feat, fx.cfg, nullptr).total; }, ptrs,
        flatten_grads(grads), 1e-5, names);
    return report.max_rel_err;
}

inline double nce_grad_max_rel_err(std::uint64_t seed) {
    LossFixture fx = make_loss_fixture(seed);
    TaskEncoder enc;
    enc.net = DenseNet::make({fx.feat.dim(), fx.cfg.hidden_dims[0], fx.cfg.latent_dim},
                             fx.cfg.activation, 50 + seed);

    const TupleBatch tb = extract_tuples(fx.data, 5, fx.cfg.h_max, fx.cfg.goal_scheme,
                                         std::uint64_t(60 + seed));
    const Eigen::MatrixXd feats = fx.feat.batch(tb.g);

    auto loss_at = [&](NetGrads* grads) {
        Rng rng(70 + seed);  // same augmentation noise on every evaluation
        return nce_loss(enc, feats, fx.cfg.temp_nce, fx.cfg.aug_sigma, rng, grads);
    };
    NetGrads grads = NetGrads::zeros_like(enc.net);
    loss_at(&grads);

    std::vector<double*> ptrs;
    std::vector<std::string> names;
    collect_params(enc.net, "task", ptrs, names);
    const GradReport report =
        grad_check([&] { return loss_at(nullptr); }, ptrs, flatten_grads(grads), 1e-5, names);
    return report.max_rel_err;
}

inline double policy_grad_max_rel_err(std::uint64_t seed) {
    LossFixture fx = make_loss_fixture(seed);
    StateEncoder phi;
    phi.net = DenseNet::make({fx.feat.dim(), fx.cfg.hidden_dims[0], fx.cfg.latent_dim},
                             fx.cfg.activation, 80 + seed);
    phi.target = phi.net;
    phi.frozen = true;
    LatentPolicy pol;
    pol.net = DenseNet::make({fx.feat.dim() + fx.cfg.latent_dim, fx.cfg.hidden_dims[0],
                              fx.env.n_actions},
                             fx.cfg.activation, 90 + seed);

    Rng rng(std::uint64_t(4100 + seed));
    const int N = 6;
    std::vector<int> s(N), a(N), sn(N);
    Eigen::MatrixXd z(fx.cfg.latent_dim, N);
    const int n_traj = static_cast<int>(fx.data.trajectories.size());
    for (int i = 0; i < N; ++i) {
        const Trajectory& tr = fx.data.trajectories[rng.uniform_int(n_traj)];
        const int pos = rng.uniform_int(tr.length());
        s[i] = tr.states[pos];
        a[i] = tr.actions[pos];
        sn[i] = tr.states[pos + 1];
        z.col(i) = random_unit_vector(fx.cfg.latent_dim, rng);
    }

    NetGrads grads = NetGrads::zeros_like(pol.net);
    policy_loss(pol, phi, s, a, sn, z, fx.feat, fx.cfg, &grads);

    std::vector<double*> ptrs;
    std::vector<std::string> names;
    collect_params(pol.net, "pi", ptrs, names);
    const GradReport report = grad_check(
        [&] { return policy_loss(pol, phi, s, a, sn, z, fx.feat, fx.cfg, nullptr); }, ptrs,
        flatten_grads(grads), 1e-5, names);
    return report.max_rel_err;
}

}  // namespace hitgeo::testing
