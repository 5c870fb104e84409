#include "hitgeo/train.hpp"

#include <chrono>
#include <cmath>

namespace hitgeo {

namespace {

constexpr double kNormEps = 1e-12;
constexpr double kAwrClip = 100.0;

double stabilized_norm(const Eigen::VectorXd& v) { return v.norm() + kNormEps; }

}  // namespace

void TrainConfig::validate() const {
    if (gamma <= 0.0 || gamma >= 1.0) throw InvalidArgument("gamma must lie in (0,1)");
    if (tau_v <= 0.0 || tau_v >= 1.0) throw InvalidArgument("tau_v must lie in (0,1)");
    if (tau_h <= 0.0 || tau_h >= 1.0) throw InvalidArgument("tau_h must lie in (0,1)");
    if (beta < 0.0) throw InvalidArgument("beta must be >= 0");
    if (kappa < 0.0) throw InvalidArgument("kappa must be >= 0");
    if (h_max < 1) throw InvalidArgument("h_max must be >= 1");
    if (latent_dim < 1) throw InvalidArgument("latent_dim must be >= 1");
    if (temp_nce <= 0.0) throw InvalidArgument("temp_nce must be > 0");
    if (aug_sigma < 0.0) throw InvalidArgument("aug_sigma must be >= 0");
    for (int s : phase_steps)
        if (s < 0) throw InvalidArgument("phase steps must be >= 0");
    if (batch < 1) throw InvalidArgument("batch must be >= 1");
    if (lr <= 0.0) throw InvalidArgument("lr must be > 0");
    if (target_tau <= 0.0 || target_tau > 1.0) throw InvalidArgument("target_tau must lie in (0,1]");
    if (actor_temp <= 0.0) throw InvalidArgument("actor_temp must be > 0");
    if (goal_scheme.future_weight < 0.0 || goal_scheme.future_weight > 1.0)
        throw InvalidArgument("goal future_weight must lie in [0,1]");
    if (goal_scheme.geometric_p <= 0.0 || goal_scheme.geometric_p >= 1.0)
        throw InvalidArgument("goal geometric_p must lie in (0,1)");
}

Featurizer Featurizer::make(const FiniteCMP& env, bool use_coords) {
    Featurizer f;
    f.n_states = env.n_states;
    f.use_coords = use_coords;
    if (use_coords) {
        if (!env.has_coords()) throw InvalidArgument("environment has no coordinates");
        f.coords = env.coords;
    }
    return f;
}

Eigen::VectorXd Featurizer::operator()(int s) const {
    if (s < 0 || s >= n_states) throw InvalidArgument("state out of range");
    if (use_coords) {
        Eigen::VectorXd v(2);
        v << coords[s][0], coords[s][1];
        return v;
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n_states);
    v[s] = 1.0;
    return v;
}

Eigen::MatrixXd Featurizer::batch(const std::vector<int>& states) const {
    Eigen::MatrixXd m(dim(), states.size());
    for (std::size_t i = 0; i < states.size(); ++i) m.col(i) = (*this)(states[i]);
    return m;
}

double directed_score_displacement(const Eigen::VectorXd& displacement,
                                   const Eigen::VectorXd& omega_g, double beta) {
    const double n = displacement.norm();
    const double cos_xi =
        displacement.dot(omega_g) / (stabilized_norm(displacement) * stabilized_norm(omega_g));
    return n * std::exp(beta * (1.0 - cos_xi));
}

double directed_score(const Eigen::VectorXd& phi_s, const Eigen::VectorXd& phi_t,
                      const Eigen::VectorXd& omega_g, double beta) {
    return directed_score_displacement(phi_t - phi_s, omega_g, beta);
}

double discounted_hitting_label(int h, double gamma) {
    return (1.0 - std::pow(gamma, static_cast<double>(h))) / (1.0 - gamma);
}

double expectile_weight(double tau, double residual) {
    return std::abs(tau - (residual < 0.0 ? 1.0 : 0.0));
}

double nce_loss(TaskEncoder& enc, const Eigen::MatrixXd& goal_feats, double temp_nce,
                double aug_sigma, Rng& rng, NetGrads* grads) {
    const int N = static_cast<int>(goal_feats.cols());
    if (N < 1) throw InvalidArgument("empty NCE batch");

    Eigen::MatrixXd aug = goal_feats;
    for (Eigen::Index j = 0; j < aug.cols(); ++j)
        for (Eigen::Index i = 0; i < aug.rows(); ++i) aug(i, j) += aug_sigma * rng.normal();

    NetTape tape_clean, tape_aug;
    const Eigen::MatrixXd Z = net_forward(enc.net, goal_feats, grads ? &tape_clean : nullptr);
    const Eigen::MatrixXd Za = net_forward(enc.net, aug, grads ? &tape_aug : nullptr);

    const int d = static_cast<int>(Z.rows());
    Eigen::MatrixXd Zh(d, N), Zah(d, N);
    Eigen::VectorXd nz(N), nza(N);
    for (int i = 0; i < N; ++i) {
        nz[i] = stabilized_norm(Z.col(i));
        nza[i] = stabilized_norm(Za.col(i));
        Zh.col(i) = Z.col(i) / nz[i];
        Zah.col(i) = Za.col(i) / nza[i];
    }

    const Eigen::MatrixXd S = (Zh.transpose() * Zah) / temp_nce;  // S(i,j) = <zh_i, zah_j>/temp

    double loss = 0.0;
    Eigen::MatrixXd P(N, N);  // row-wise softmax of S
    for (int i = 0; i < N; ++i) {
        const double row_max = S.row(i).maxCoeff();
        double lse = 0.0;
        for (int j = 0; j < N; ++j) lse += std::exp(S(i, j) - row_max);
        const double log_denom = row_max + std::log(lse);
        loss += log_denom - S(i, i);
        for (int j = 0; j < N; ++j) P(i, j) = std::exp(S(i, j) - log_denom);
    }
    loss /= N;

    if (grads) {
        if (enc.frozen) throw FrozenViolation("task encoder is frozen");
        Eigen::MatrixXd dS = P;
        dS.diagonal().array() -= 1.0;
        dS /= static_cast<double>(N) * temp_nce;

        const Eigen::MatrixXd dZh = Zah * dS.transpose();  // d loss / d zh_i
        const Eigen::MatrixXd dZah = Zh * dS;              // d loss / d zah_j

        // Back through the stabilized normalization z / (||z|| + eps).
        Eigen::MatrixXd dZ(d, N), dZa(d, N);
        for (int i = 0; i < N; ++i) {
            dZ.col(i) = dZh.col(i) / nz[i] -
                        Z.col(i) * (Z.col(i).dot(dZh.col(i)) / (nz[i] * nz[i] * nz[i]));
            dZa.col(i) = dZah.col(i) / nza[i] -
                         Za.col(i) * (Za.col(i).dot(dZah.col(i)) / (nza[i] * nza[i] * nza[i]));
        }

        net_backward(enc.net, tape_clean, dZ, *grads);
        net_backward(enc.net, tape_aug, dZa, *grads);
    }
    return loss;
}

LossBreakdown emb_loss(StateEncoder& phi, const TaskEncoder& task, const TupleBatch& batch,
                       const Featurizer& feat, const TrainConfig& cfg, NetGrads* grads) {
    if (!task.frozen) throw FrozenViolation("task encoder must be frozen during embedding learning");
    const int N = static_cast<int>(batch.size());
    if (N < 1) throw InvalidArgument("empty tuple batch");

    // One online pass over the concatenated [s | g | u] blocks.
    std::vector<int> cat(3 * N);
    for (int i = 0; i < N; ++i) {
        cat[i] = batch.s[i];
        cat[N + i] = batch.g[i];
        cat[2 * N + i] = batch.u[i];
    }
    const Eigen::MatrixXd X = feat.batch(cat);
    NetTape tape;
    const Eigen::MatrixXd out = net_forward(phi.net, X, grads ? &tape : nullptr);

    // Frozen passes: task identifiers and the bootstrap side.
    const Eigen::MatrixXd omega = net_forward(task.net, feat.batch(batch.g), nullptr);
    std::vector<int> boot(2 * N);
    for (int i = 0; i < N; ++i) {
        boot[i] = batch.g[i];
        boot[N + i] = batch.s_next[i];
    }
    const Eigen::MatrixXd tgt_out = net_forward(phi.target, feat.batch(boot), nullptr);

    const int d = static_cast<int>(out.rows());
    Eigen::MatrixXd upstream = grads ? Eigen::MatrixXd::Zero(d, 3 * N) : Eigen::MatrixXd();

    LossBreakdown lb;
    for (int i = 0; i < N; ++i) {
        const Eigen::VectorXd w_g = omega.col(i);
        const double m_w = stabilized_norm(w_g);

        // Bellman target from the target network (stop-gradient).
        const Eigen::VectorXd delta_boot = tgt_out.col(i) - tgt_out.col(N + i);
        const double d_boot = directed_score_displacement(delta_boot, w_g, cfg.beta);
        const double target = batch.s[i] == batch.g[i] ? 0.0 : 1.0 + cfg.gamma * d_boot;

        // Online directed score at s.
        const Eigen::VectorXd delta = out.col(N + i) - out.col(i);
        const double n = delta.norm();
        const double ns = n + kNormEps;
        const double sip = delta.dot(w_g);
        const double cos_xi = sip / (ns * m_w);
        const double expf = std::exp(cfg.beta * (1.0 - cos_xi));
        const double score = n * expf;

        const double residual = target - score;
        // Expectile taken in value convention (sign-flipped residual):
        // tau_v > 0.5 biases toward the shorter supported distances and the
        // bootstrapped targets stay contractive.
        const double w = expectile_weight(cfg.tau_v, -residual);

        // Hitting-time regression channel.
        const Eigen::VectorXd delta_u = out.col(2 * N + i) - out.col(i);
        const double label = discounted_hitting_label(batch.h[i], cfg.gamma);
        const Eigen::VectorXd w_hat = w_g / m_w;
        const double ell = label - delta_u.dot(w_hat);
        const double w_h = expectile_weight(cfg.tau_h, ell);

        lb.td_term += w * residual * residual;
        lb.hit_term += cfg.kappa * w_h * ell * ell;
        lb.mean_cos += cos_xi;
        lb.mean_distance += score;

        if (grads) {
            // d score / d delta, gradients flowing through the stabilized norms.
            const Eigen::VectorXd d_cos =
                w_g / (ns * m_w) - delta * (sip / (ns * ns * ns * m_w));
            const Eigen::VectorXd d_score = expf * (delta / ns) - (n * expf * cfg.beta) * d_cos;
            const Eigen::VectorXd up_delta = (-2.0 * w * residual / N) * d_score;
            upstream.col(N + i) += up_delta;
            upstream.col(i) -= up_delta;

            const Eigen::VectorXd up_delta_u = (-2.0 * cfg.kappa * w_h * ell / N) * w_hat;
            upstream.col(2 * N + i) += up_delta_u;
            upstream.col(i) -= up_delta_u;
        }
    }
    lb.td_term /= N;
    lb.hit_term /= N;
    lb.total = lb.td_term + lb.hit_term;
    lb.mean_cos /= N;
    lb.mean_distance /= N;

    if (grads) net_backward(phi.net, tape, upstream, *grads);
    return lb;
}

double policy_loss(LatentPolicy& policy, const StateEncoder& phi,
                   const std::vector<int>& s, const std::vector<int>& a,
                   const std::vector<int>& s_next, const Eigen::MatrixXd& z,
                   const Featurizer& feat, const TrainConfig& cfg, NetGrads* grads) {
    if (!phi.frozen) throw NotFrozen("state encoder must be frozen during policy learning");
    const int N = static_cast<int>(s.size());
    if (N < 1) throw InvalidArgument("empty policy batch");
    if (a.size() != s.size() || s_next.size() != s.size() || z.cols() != N)
        throw ShapeMismatch("policy batch arrays");

    const Eigen::MatrixXd phi_s = net_forward(phi.net, feat.batch(s), nullptr);
    const Eigen::MatrixXd phi_sn = net_forward(phi.net, feat.batch(s_next), nullptr);

    // Policy input: state features stacked with the latent direction.
    Eigen::MatrixXd input(feat.dim() + z.rows(), N);
    input.topRows(feat.dim()) = feat.batch(s);
    input.bottomRows(z.rows()) = z;

    NetTape tape;
    const Eigen::MatrixXd logits = net_forward(policy.net, input, grads ? &tape : nullptr);
    const int A = static_cast<int>(logits.rows());

    double loss = 0.0;
    Eigen::MatrixXd upstream = grads ? Eigen::MatrixXd::Zero(A, N) : Eigen::MatrixXd();
    for (int i = 0; i < N; ++i) {
        const double r = (phi_sn.col(i) - phi_s.col(i)).dot(z.col(i));
        const double adv = r + cfg.gamma * phi_sn.col(i).dot(z.col(i)) - phi_s.col(i).dot(z.col(i));
        const double scaled = cfg.actor_temp * adv;
        const double weight = scaled >= std::log(kAwrClip) ? kAwrClip : std::exp(scaled);

        const double row_max = logits.col(i).maxCoeff();
        double lse = 0.0;
        for (int k = 0; k < A; ++k) lse += std::exp(logits(k, i) - row_max);
        const double log_denom = row_max + std::log(lse);
        const double log_prob = logits(a[i], i) - log_denom;
        loss -= weight * log_prob;

        if (grads) {
            for (int k = 0; k < A; ++k)
                upstream(k, i) = weight * std::exp(logits(k, i) - log_denom) / N;
            upstream(a[i], i) -= weight / N;
        }
    }
    loss /= N;

    if (grads) net_backward(policy.net, tape, upstream, *grads);
    return loss;
}

int act(const LatentPolicy& policy, const Eigen::VectorXd& x_feat, Eigen::VectorXd z,
        ActMode mode, Rng* rng) {
    z /= stabilized_norm(z);
    Eigen::VectorXd input(x_feat.size() + z.size());
    input << x_feat, z;
    const Eigen::VectorXd logits = net_forward_vec(policy.net, input);
    const int A = static_cast<int>(logits.size());

    if (mode == ActMode::greedy) {
        int best = 0;
        for (int k = 1; k < A; ++k)
            if (logits[k] > logits[best]) best = k;  // lowest index wins ties
        return best;
    }

    if (!rng) throw InvalidArgument("sampling requires an rng");
    const double row_max = logits.maxCoeff();
    Eigen::VectorXd p(A);
    double total = 0.0;
    for (int k = 0; k < A; ++k) {
        p[k] = std::exp(logits[k] - row_max);
        total += p[k];
    }
    const double u = rng->uniform() * total;
    double acc = 0.0;
    for (int k = 0; k < A; ++k) {
        acc += p[k];
        if (u < acc) return k;
    }
    return A - 1;
}

Eigen::VectorXd random_unit_vector(int dim, Rng& rng) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    return v / stabilized_norm(v);
}

TrainState make_train_state(const FiniteCMP& env, const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.feat = Featurizer::make(env, cfg.coord_features);
    st.n_actions = env.n_actions;

    auto dims_to = [&](int in, int out) {
        std::vector<int> dims{in};
        dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
        dims.push_back(out);
        return dims;
    };
    Rng seeder(cfg.seed);
    const std::uint64_t s_task = seeder.substream("init/task").next_u64();
    const std::uint64_t s_phi = seeder.substream("init/phi").next_u64();
    const std::uint64_t s_pol = seeder.substream("init/policy").next_u64();

    st.task.net = DenseNet::make(dims_to(st.feat.dim(), cfg.latent_dim), cfg.activation, s_task);
    st.phi.net = DenseNet::make(dims_to(st.feat.dim(), cfg.latent_dim), cfg.activation, s_phi);
    st.phi.target = st.phi.net;
    st.policy.net =
        DenseNet::make(dims_to(st.feat.dim() + cfg.latent_dim, env.n_actions), cfg.activation, s_pol);

    st.opt_task = OptimizerState::make(st.task.net, cfg.lr);
    st.opt_phi = OptimizerState::make(st.phi.net, cfg.lr);
    st.opt_policy = OptimizerState::make(st.policy.net, cfg.lr);
    return st;
}

std::vector<StepLog> train_phase(Phase phase, TrainState& state, const Dataset& data,
                                 const TrainConfig& cfg) {
    const int k = static_cast<int>(phase);
    if (state.phase_done != k - 1)
        throw PhaseOrderViolation("phase " + std::to_string(k) + " after phase " +
                                  std::to_string(state.phase_done));

    Rng base(cfg.seed);
    Rng rng = base.substream(phase == Phase::task        ? "train/task"
                             : phase == Phase::embedding ? "train/embedding"
                                                         : "train/policy");
    const int steps = cfg.phase_steps[static_cast<std::size_t>(k)];
    std::vector<StepLog> logs;
    logs.reserve(steps);

    const int n_traj = static_cast<int>(data.trajectories.size());
    for (int step = 0; step < steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        StepLog log;
        log.step = step;

        if (phase == Phase::task) {
            // Algorithm batch: goals, intermediates, and states concatenated.
            const TupleBatch tb = extract_tuples(data, cfg.batch, cfg.h_max, cfg.goal_scheme, rng);
            std::vector<int> states;
            states.reserve(3 * tb.size());
            states.insert(states.end(), tb.g.begin(), tb.g.end());
            states.insert(states.end(), tb.u.begin(), tb.u.end());
            states.insert(states.end(), tb.s.begin(), tb.s.end());
            NetGrads grads = NetGrads::zeros_like(state.task.net);
            log.nce = nce_loss(state.task, state.feat.batch(states), cfg.temp_nce, cfg.aug_sigma,
                               rng, &grads);
            opt_step(state.opt_task, state.task.net, grads);
        } else if (phase == Phase::embedding) {
            const TupleBatch tb = extract_tuples(data, cfg.batch, cfg.h_max, cfg.goal_scheme, rng);
            NetGrads grads = NetGrads::zeros_like(state.phi.net);
            const LossBreakdown lb = emb_loss(state.phi, state.task, tb, state.feat, cfg, &grads);
            opt_step(state.opt_phi, state.phi.net, grads);
            polyak_update(state.phi.target, state.phi.net, cfg.target_tau);
            log.td_term = lb.td_term;
            log.hit_term = lb.hit_term;
        } else {
            // Random transitions plus uniformly random unit-length z.
            std::vector<int> s(cfg.batch), a(cfg.batch), sn(cfg.batch);
            Eigen::MatrixXd z(cfg.latent_dim, cfg.batch);
            for (int i = 0; i < cfg.batch; ++i) {
                const Trajectory& tr = data.trajectories[rng.uniform_int(n_traj)];
                const int pos = rng.uniform_int(tr.length());
                s[i] = tr.states[pos];
                a[i] = tr.actions[pos];
                sn[i] = tr.states[pos + 1];
                z.col(i) = random_unit_vector(cfg.latent_dim, rng);
            }
            NetGrads grads = NetGrads::zeros_like(state.policy.net);
            log.policy =
                policy_loss(state.policy, state.phi, s, a, sn, z, state.feat, cfg, &grads);
            opt_step(state.opt_policy, state.policy.net, grads);
        }

        log.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        logs.push_back(log);
    }

    state.phase_done = k;
    if (phase == Phase::task) state.task.frozen = true;
    if (phase == Phase::embedding) state.phi.frozen = true;
    if (phase == Phase::policy) state.policy.frozen = true;
    return logs;
}

}  // namespace hitgeo
