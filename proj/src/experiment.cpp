#include "hitgeo/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "hitgeo/io.hpp"

namespace hitgeo {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) { return CsvWriter::format(v); }

std::vector<int> distinct_dataset_states(const Dataset& data) {
    std::set<int> seen;
    for (const auto& tr : data.trajectories) seen.insert(tr.states.begin(), tr.states.end());
    return std::vector<int>(seen.begin(), seen.end());
}

Coreset build_coreset(const Dataset& data, TrainState& state, const PlanSpec& plan) {
    const std::vector<int> ids = distinct_dataset_states(data);
    Eigen::MatrixXd emb(state.phi.net.output_dim(), ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        emb.col(i) = net_forward_vec(state.phi.net, state.feat(ids[i]));
    return dpp_greedy_coreset(emb, ids, std::max(2, plan.coreset_budget), plan.coreset_sigma);
}

int env_step(const FiniteCMP& env, int x, int a, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int y = 0; y < env.n_states; ++y) {
        acc += env.kernel[a](x, y);
        if (u < acc) return y;
    }
    return env.n_states - 1;
}

std::vector<int> pick_goals(const FiniteCMP& env, const EvalSpec& eval) {
    if (!eval.goals.empty()) {
        for (int g : eval.goals)
            if (g < 0 || g >= env.n_states) throw ConfigError("eval goal out of range");
        return eval.goals;
    }
    // Evenly spaced state indices.
    std::vector<int> goals;
    const int k = std::min(eval.auto_goals, env.n_states);
    for (int i = 0; i < k; ++i)
        goals.push_back(static_cast<int>((static_cast<long>(i) * (env.n_states - 1)) /
                                         std::max(1, k - 1)));
    std::sort(goals.begin(), goals.end());
    goals.erase(std::unique(goals.begin(), goals.end()), goals.end());
    return goals;
}

}  // namespace

std::vector<EvalRow> evaluate(const FiniteCMP& env, TrainState& state, const Dataset& data,
                              const PlanSpec& plan, const EvalSpec& eval,
                              const TrainConfig& train_cfg, std::uint64_t seed) {
    if (!state.phi.frozen || !state.task.frozen)
        throw NotFrozen("evaluate requires fully trained, frozen encoders");

    const double beta = plan.beta >= 0.0 ? plan.beta : train_cfg.beta;
    const Coreset coreset = build_coreset(data, state, plan);
    const std::vector<int> goals = pick_goals(env, eval);

    // Goal-agnostic graph shared by the symmetric planner.
    CostMatrix sym_cost;
    PlanGraph sym_graph;
    const bool want_sym = std::count(eval.planners.begin(), eval.planners.end(),
                                     PlannerKind::sym_graph) > 0;
    if (want_sym) {
        sym_cost = cost_matrix(coreset, Eigen::VectorXd::Zero(coreset.embeddings.rows()), -1, 0.0);
        sym_graph = construct_graph(sym_cost, plan.k);
    }

    std::vector<EvalRow> rows;
    Rng rng = Rng(seed).substream("eval");

    for (PlannerKind planner : eval.planners) {
        for (int goal : goals) {
            const Eigen::VectorXd phi_g = net_forward_vec(state.phi.net, state.feat(goal));
            const Eigen::VectorXd omega_g = net_forward_vec(state.task.net, state.feat(goal));

            // Per-goal planner state.
            CostMatrix cost;
            PlanGraph graph;
            ShortestPaths sp;
            int v_goal = -1;
            if (planner == PlannerKind::asym_graph) {
                cost = cost_matrix(coreset, omega_g, goal, beta);
                graph = construct_graph(cost, plan.k);
                v_goal = localize_goal_vertex(coreset, phi_g, omega_g, beta);
                sp = shortest_paths(graph, v_goal);
            } else if (planner == PlannerKind::sym_graph) {
                const Eigen::VectorXd zero = Eigen::VectorXd::Zero(omega_g.size());
                v_goal = localize_goal_vertex(coreset, phi_g, zero, 0.0);
                sp = shortest_paths(sym_graph, v_goal);
            }

            int successes = 0;
            long success_steps = 0;
            for (int ep = 0; ep < eval.episodes; ++ep) {
                int x = rng.uniform_int(env.n_states);
                int t = 0;
                while (x != goal && t < eval.max_steps) {
                    const Eigen::VectorXd phi_x = net_forward_vec(state.phi.net, state.feat(x));
                    Eigen::VectorXd z;
                    switch (planner) {
                        case PlannerKind::direct:
                            z = phi_g - phi_x;
                            break;
                        case PlannerKind::rec_mid: {
                            const int mid = rec_mid_plan(phi_x, phi_g, coreset, plan.rec_mid_depth);
                            z = coreset.embeddings.col(mid) - phi_x;
                            break;
                        }
                        case PlannerKind::sym_graph: {
                            const Eigen::VectorXd zero = Eigen::VectorXd::Zero(omega_g.size());
                            plan_step(coreset, sp, v_goal, phi_x, phi_g, zero, 0.0, z);
                            break;
                        }
                        case PlannerKind::asym_graph:
                            plan_step(coreset, sp, v_goal, phi_x, phi_g, omega_g, beta, z);
                            break;
                    }
                    const int a = act(state.policy, state.feat(x), z, eval.mode, &rng);
                    x = env_step(env, x, a, rng);
                    ++t;
                }
                if (x == goal) {
                    ++successes;
                    success_steps += t;
                }
            }

            EvalRow row;
            row.planner = planner;
            row.goal = goal;
            row.episodes = eval.episodes;
            row.success_rate = static_cast<double>(successes) / eval.episodes;
            row.mean_steps =
                successes > 0 ? static_cast<double>(success_steps) / successes : -1.0;
            rows.push_back(row);
        }
    }
    return rows;
}

double max_cost_asymmetry(const FiniteCMP& env, TrainState& state, const Dataset& data,
                          const PlanSpec& plan, const TrainConfig& train_cfg) {
    const double beta = plan.beta >= 0.0 ? plan.beta : train_cfg.beta;
    const Coreset coreset = build_coreset(data, state, plan);
    // Witness against an arbitrary fixed goal direction: the last state.
    const int goal = env.n_states - 1;
    const Eigen::VectorXd omega_g = net_forward_vec(state.task.net, state.feat(goal));
    const CostMatrix cm = cost_matrix(coreset, omega_g, goal, beta);
    double worst = 1.0;
    const int n = static_cast<int>(cm.c.rows());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (cm.c(i, j) <= 0.0 || cm.c(j, i) <= 0.0) continue;
            worst = std::max({worst, cm.c(i, j) / cm.c(j, i), cm.c(j, i) / cm.c(i, j)});
        }
    return worst;
}

namespace {

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    CsvWriter csv(path, {"planner", "goal", "success_rate", "mean_steps", "episodes"});
    for (const auto& r : rows)
        csv.write_row({planner_to_string(r.planner), CsvWriter::format(r.goal),
                       fmt(r.success_rate), fmt(r.mean_steps), CsvWriter::format(r.episodes)});
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
    const auto rows = read_csv(path);
    if (rows.empty() || rows[0] != std::vector<std::string>{"planner", "goal", "success_rate",
                                                            "mean_steps", "episodes"})
        throw IoError("bad eval csv " + path);
    std::vector<EvalRow> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EvalRow r;
        r.planner = planner_from_string(rows[i][0]);
        r.goal = std::stoi(rows[i][1]);
        r.success_rate = std::stod(rows[i][2]);
        r.mean_steps = std::stod(rows[i][3]);
        r.episodes = std::stoi(rows[i][4]);
        out.push_back(r);
    }
    return out;
}

void write_summary(const std::string& path, const ExperimentConfig& cfg, std::uint64_t seed,
                   const std::vector<EvalRow>& rows) {
    std::ostringstream out;
    out << "seed " << seed << "\n";
    std::map<std::string, std::pair<double, int>> per_planner;
    for (const auto& r : rows) {
        auto& [sum, count] = per_planner[planner_to_string(r.planner)];
        sum += r.success_rate;
        count += 1;
    }
    for (const auto& [name, agg] : per_planner)
        out << name << " success " << fmt(agg.first / agg.second) << " over " << agg.second
            << " goals\n";
    out << "episodes_per_goal " << cfg.eval.episodes << "\n";
    write_text_file(path, out.str());
}

}  // namespace

RunArtifacts run_seed(const ExperimentConfig& cfg_in, std::uint64_t seed) {
    ExperimentConfig cfg = cfg_in;
    cfg.train.seed = seed;
    cfg.seeds = {seed};
    cfg.validate();

    RunArtifacts art;
    art.run_dir = (fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed))).string();
    ensure_dir(art.run_dir);
    const auto path = [&](const char* name) { return (fs::path(art.run_dir) / name).string(); };

    CsvWriter timings(path("timings.csv"), {"stage", "wall_ms"}, /*append=*/true);
    const auto stage_clock = [&](const char* stage, auto&& body) {
        const auto t0 = std::chrono::steady_clock::now();
        body();
        timings.write_row({stage, fmt(std::chrono::duration<double, std::milli>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count())});
    };

    write_text_file(path("config.ini"), config_to_text(cfg));

    // Environment.
    FiniteCMP env;
    if (file_exists(path("env.env"))) {
        env = load_env(path("env.env"));
    } else {
        stage_clock("gen-env", [&] {
            env = build_env(cfg.env, Rng(seed).substream("env").next_u64());
            save_env(path("env.env"), env);
        });
    }

    // Dataset.
    Dataset data;
    if (file_exists(path("data.ds"))) {
        data = load_dataset(path("data.ds"));
        if (data.env_fingerprint != env.fingerprint())
            throw IoError("dataset fingerprint does not match the environment");
    } else {
        stage_clock("collect", [&] {
            data = sample_trajectories(env, build_behavior(env, cfg.data), cfg.data.trajectories,
                                       cfg.data.length, Rng(seed).substream("collect").next_u64());
            save_dataset(path("data.ds"), data);
        });
    }

    // Training, one resumable phase at a time.
    TrainState state = make_train_state(env, cfg.train);
    CsvWriter loss_csv(path("loss.csv"),
                       {"step", "td_term", "hit_term", "nce", "policy", "wall_ms"},
                       /*append=*/true);
    int global_step = 0;

    const auto run_phase = [&](Phase phase, const char* stage) {
        const int index = static_cast<int>(phase);
        const int steps = cfg.train.phase_steps[static_cast<std::size_t>(index)];
        stage_clock(stage, [&] {
            const auto logs = train_phase(phase, state, data, cfg.train);
            for (const auto& log : logs)
                loss_csv.write_row({CsvWriter::format(global_step + log.step), fmt(log.td_term),
                                    fmt(log.hit_term), fmt(log.nce), fmt(log.policy),
                                    fmt(log.wall_ms)});
        });
        global_step += steps;
    };

    if (file_exists(path("task.ckpt"))) {
        Checkpoint ck = load_checkpoint(path("task.ckpt"));
        state.task.net = std::move(ck.net);
        if (ck.opt) state.opt_task = std::move(*ck.opt);
        state.task.frozen = true;
        state.phase_done = 0;
        global_step += cfg.train.phase_steps[0];
    } else {
        run_phase(Phase::task, "train-task");
        save_checkpoint(path("task.ckpt"), state.task.net, &state.opt_task);
    }

    if (file_exists(path("phi.ckpt")) && file_exists(path("phi_target.ckpt"))) {
        Checkpoint ck = load_checkpoint(path("phi.ckpt"));
        state.phi.net = std::move(ck.net);
        if (ck.opt) state.opt_phi = std::move(*ck.opt);
        state.phi.target = load_checkpoint(path("phi_target.ckpt")).net;
        state.phi.frozen = true;
        state.phase_done = 1;
        global_step += cfg.train.phase_steps[1];
    } else {
        run_phase(Phase::embedding, "train-embedding");
        save_checkpoint(path("phi.ckpt"), state.phi.net, &state.opt_phi);
        save_checkpoint(path("phi_target.ckpt"), state.phi.target, nullptr);
    }

    if (file_exists(path("policy.ckpt"))) {
        Checkpoint ck = load_checkpoint(path("policy.ckpt"));
        state.policy.net = std::move(ck.net);
        if (ck.opt) state.opt_policy = std::move(*ck.opt);
        state.policy.frozen = true;
        state.phase_done = 2;
    } else {
        run_phase(Phase::policy, "train-policy");
        save_checkpoint(path("policy.ckpt"), state.policy.net, &state.opt_policy);
    }

    // Evaluation.
    if (file_exists(path("eval.csv"))) {
        art.eval_rows = read_eval_csv(path("eval.csv"));
    } else {
        stage_clock("eval", [&] {
            art.eval_rows =
                evaluate(env, state, data, cfg.plan, cfg.eval, cfg.train, seed);
            write_eval_csv(path("eval.csv"), art.eval_rows);
        });
    }
    write_summary(path("summary.txt"), cfg, seed, art.eval_rows);
    return art;
}

std::vector<RunArtifacts> run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("HITGEO_THREADS")) workers = std::max(1, std::atoi(cap));
    workers = std::min<int>(workers, static_cast<int>(cfg.seeds.size()));
    workers = std::max(workers, 1);

    std::vector<RunArtifacts> results(cfg.seeds.size());
    std::vector<std::string> errors;
    std::mutex mu;
    std::size_t next = 0;

    auto worker = [&] {
        while (true) {
            std::size_t mine;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= cfg.seeds.size()) return;
                mine = next++;
            }
            try {
                results[mine] = run_seed(cfg, cfg.seeds[mine]);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                errors.push_back("seed " + std::to_string(cfg.seeds[mine]) + ": " + e.what());
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (!errors.empty()) throw Error(errors.front());
    return results;
}

SuiteResult suite_poisson(int chains, int mc_chains, int mc_episodes, std::uint64_t seed) {
    SuiteResult result;
    result.name = "poisson";
    Rng rng(seed);
    for (int c = 0; c < chains; ++c) {
        const int n = 3 + rng.uniform_int(48);
        const int out_degree = 2 + rng.uniform_int(2) + (n > 20 ? 1 : 0);
        const FiniteCMP env = make_random_digraph_cmp(
            n, 1 + rng.uniform_int(3), out_degree, seed * 1000 + c);
        const MarkovChain chain = induce_chain(env, uniform_policy(env));
        const int goal = rng.uniform_int(n);
        const HittingTable table = solve_hitting_times(chain, goal);

        double residual = 0.0;
        for (int x = 0; x < n; ++x) {
            if (x == goal) continue;
            double expect = 0.0;
            for (int y = 0; y < n; ++y)
                if (y != goal) expect += chain.P(x, y) * table.v[y];
            residual = std::max(residual, std::abs(table.v[x] - 1.0 - expect));
        }
        const bool ok = residual < 1e-9;
        result.pass = result.pass && ok;
        result.worst = std::max(result.worst, residual);
        ++result.cases;
        result.csv_rows.push_back({"poisson", std::to_string(c), std::to_string(goal), "0",
                                   fmt(residual), "1e-09", ok ? "pass" : "fail"});

        if (c < mc_chains) {
            int start = rng.uniform_int(n);
            while (start == goal) start = rng.uniform_int(n);
            const McHitting mc =
                mc_hitting_time(chain, start, goal, mc_episodes, seed * 77 + c);
            const double gap = std::abs(mc.mean - table.v[start]);
            const bool mc_ok = gap <= 3.0 * mc.stderr_mean;
            result.pass = result.pass && mc_ok;
            ++result.cases;
            result.csv_rows.push_back({"poisson-mc", std::to_string(c), std::to_string(goal), "0",
                                       fmt(gap), fmt(3.0 * mc.stderr_mean),
                                       mc_ok ? "pass" : "fail"});
        }
    }
    return result;
}

SuiteResult suite_representation(int cmps, std::uint64_t seed) {
    SuiteResult result;
    result.name = "representation";
    Rng rng(seed);
    for (int c = 0; c < cmps; ++c) {
        const int n = 4 + rng.uniform_int(27);
        const int out_degree = 2 + rng.uniform_int(2) + (n > 20 ? 1 : 0);
        const FiniteCMP env = make_random_digraph_cmp(
            n, 1 + rng.uniform_int(3), out_degree, seed * 2000 + c);
        const MarkovChain chain = induce_chain(env, uniform_policy(env));
        double worst = 0.0;
        for (int goal = 0; goal < n; ++goal) {
            const HittingTable table = solve_hitting_times(chain, goal);
            const Representer rep = solve_representer(chain, goal);
            for (int x = 0; x < n; ++x)
                worst = std::max(worst, std::abs(representer_readout(rep, x) - table.v[x]));
        }
        const bool ok = worst < 1e-8;
        result.pass = result.pass && ok;
        result.worst = std::max(result.worst, worst);
        ++result.cases;
        result.csv_rows.push_back({"representation", std::to_string(c), "all", "0", fmt(worst),
                                   "1e-08", ok ? "pass" : "fail"});
    }
    return result;
}

SuiteResult suite_isomorphism(int pairs, std::uint64_t seed) {
    SuiteResult result;
    result.name = "isomorphism";
    const int d = 4, n = 12;
    Rng rng(seed);
    for (int c = 0; c < pairs; ++c) {
        Eigen::MatrixXd phi_a(d, n), noise(d, d), phi_r(d, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < d; ++i) {
                phi_a(i, j) = rng.normal();
                phi_r(i, j) = rng.normal();
            }
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < d; ++i) noise(i, j) = rng.normal();
        const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(noise).householderQ();

        std::vector<int> states(n);
        for (int i = 0; i < n; ++i) states[i] = i;

        const DisplacementFit rotated = fit_displacement_map(phi_a, Q * phi_a, 0, states);
        const bool rot_ok = rotated.residual < 1e-8;
        result.csv_rows.push_back({"isomorphism-rotated", std::to_string(c), "0", "0",
                                   fmt(rotated.residual), "1e-08", rot_ok ? "pass" : "fail"});

        // Independent random pair: residual must stay above the frozen
        // Monte Carlo floor of 0.1.
        const DisplacementFit random_pair = fit_displacement_map(phi_a, phi_r, 0, states);
        const bool rnd_ok = random_pair.residual > 0.1;
        result.csv_rows.push_back({"isomorphism-random", std::to_string(c), "0", "0",
                                   fmt(random_pair.residual), ">0.1", rnd_ok ? "pass" : "fail"});

        result.pass = result.pass && rot_ok && rnd_ok;
        result.worst = std::max(result.worst, rotated.residual);
        result.cases += 2;
    }
    return result;
}

SuiteResult suite_bound(int chains, int trials, std::uint64_t seed) {
    SuiteResult result;
    result.name = "bound";
    Rng rng(seed);
    for (int c = 0; c < chains; ++c) {
        const int n = 4 + rng.uniform_int(27);
        const int out_degree = 2 + rng.uniform_int(2) + (n > 20 ? 1 : 0);
        const FiniteCMP env = make_random_digraph_cmp(
            n, 1 + rng.uniform_int(3), out_degree, seed * 3000 + c);
        const MarkovChain chain = induce_chain(env, uniform_policy(env));
        const int goal = rng.uniform_int(n);
        for (double eps : {1e-3, 1e-2, 1e-1}) {
            const BoundReport report =
                verify_error_bound(chain, goal, eps, trials, seed * 4000 + c);
            result.pass = result.pass && report.all_ok;
            result.worst =
                std::max(result.worst, report.bound > 0 ? report.sup_error / report.bound : 0.0);
            ++result.cases;
            result.csv_rows.push_back({"bound", std::to_string(c), std::to_string(goal), fmt(eps),
                                       fmt(report.sup_error), fmt(report.bound),
                                       report.all_ok ? "pass" : "fail"});
        }
    }
    return result;
}

std::vector<SuiteResult> run_verify_suites(std::uint64_t seed, const std::string& csv_path) {
    std::vector<SuiteResult> suites;
    suites.push_back(suite_poisson(50, 3, 100000, seed + 1));
    suites.push_back(suite_representation(20, seed + 2));
    suites.push_back(suite_isomorphism(20, seed + 3));
    suites.push_back(suite_bound(100, 3, seed + 4));

    if (!csv_path.empty()) {
        CsvWriter csv(csv_path,
                      {"suite", "case", "goal", "epsilon", "observed", "threshold", "verdict"});
        for (const auto& suite : suites)
            for (const auto& row : suite.csv_rows) csv.write_row(row);
    }
    return suites;
}

std::vector<ReportRow> aggregate_runs(const std::vector<std::string>& run_dirs) {
    // planner -> per-seed mean success and mean steps.
    std::map<std::string, std::vector<std::pair<double, double>>> per_planner;
    for (const auto& dir : run_dirs) {
        const auto rows = read_eval_csv((fs::path(dir) / "eval.csv").string());
        std::map<std::string, std::vector<const EvalRow*>> by_planner;
        for (const auto& r : rows) by_planner[planner_to_string(r.planner)].push_back(&r);
        for (const auto& [name, list] : by_planner) {
            double success = 0.0, steps = 0.0;
            int step_rows = 0;
            for (const auto* r : list) {
                success += r->success_rate;
                if (r->mean_steps >= 0.0) {
                    steps += r->mean_steps;
                    ++step_rows;
                }
            }
            per_planner[name].emplace_back(success / list.size(),
                                           step_rows ? steps / step_rows : -1.0);
        }
    }

    std::vector<ReportRow> report;
    for (const auto& [name, entries] : per_planner) {
        ReportRow row;
        row.planner = planner_from_string(name);
        row.seeds = static_cast<int>(entries.size());
        double sum = 0.0;
        for (const auto& [success, steps] : entries) sum += success;
        row.mean_success = sum / entries.size();
        double var = 0.0;
        for (const auto& [success, steps] : entries)
            var += (success - row.mean_success) * (success - row.mean_success);
        row.std_success = entries.size() > 1 ? std::sqrt(var / (entries.size() - 1)) : 0.0;
        double steps_sum = 0.0;
        int steps_n = 0;
        for (const auto& [success, steps] : entries)
            if (steps >= 0.0) {
                steps_sum += steps;
                ++steps_n;
            }
        row.mean_steps = steps_n ? steps_sum / steps_n : -1.0;
        report.push_back(row);
    }
    return report;
}

}  // namespace hitgeo
