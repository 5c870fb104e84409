#include "hitgeo/cli.hpp"

#include <cstdio>
#include <filesystem>

#include <CLI11.hpp>

#include "hitgeo/experiment.hpp"
#include "hitgeo/io.hpp"

namespace hitgeo {

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    std::string planner;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool need_config) {
    auto* config = cmd->add_option("--config", opts.config_path, "configuration file");
    if (need_config) config->required();
    cmd->add_option("--out", opts.out, "output path");
    cmd->add_option("--override", opts.overrides, "section.key=value override (repeatable)");
    cmd->add_option("--seed", opts.seed, "global seed override");
    cmd->add_option("--planner", opts.planner,
                    "planner override: rec_mid|sym_graph|asym_graph|direct");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg =
        opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
    for (const auto& assignment : opts.overrides) apply_override(cfg, assignment);
    if (opts.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
    if (!opts.out.empty()) cfg.out_dir = opts.out;
    if (!opts.planner.empty()) cfg.eval.planners = {planner_from_string(opts.planner)};
    cfg.validate();
    return cfg;
}

// Builds (or resumes) everything an eval needs and returns the ready state.
struct LoadedRun {
    FiniteCMP env;
    Dataset data;
    TrainState state;
    ExperimentConfig cfg;
    std::string run_dir;
};

LoadedRun prepare_run(const CommonOpts& opts) {
    LoadedRun run;
    run.cfg = resolve_config(opts);
    const std::uint64_t seed = run.cfg.seeds.front();
    const RunArtifacts art = run_seed(run.cfg, seed);
    run.run_dir = art.run_dir;
    run.env = load_env((fs::path(art.run_dir) / "env.env").string());
    run.data = load_dataset((fs::path(art.run_dir) / "data.ds").string());
    run.cfg.train.seed = seed;
    run.state = make_train_state(run.env, run.cfg.train);
    run.state.task.net = load_checkpoint((fs::path(art.run_dir) / "task.ckpt").string()).net;
    run.state.phi.net = load_checkpoint((fs::path(art.run_dir) / "phi.ckpt").string()).net;
    run.state.phi.target =
        load_checkpoint((fs::path(art.run_dir) / "phi_target.ckpt").string()).net;
    run.state.policy.net = load_checkpoint((fs::path(art.run_dir) / "policy.ckpt").string()).net;
    run.state.task.frozen = run.state.phi.frozen = run.state.policy.frozen = true;
    run.state.phase_done = 2;
    return run;
}

int cmd_gen_env(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const std::uint64_t seed = cfg.seeds.front();
    const FiniteCMP env = build_env(cfg.env, Rng(seed).substream("env").next_u64());
    const std::string out = opts.out.empty() ? "env.env" : opts.out;
    save_env(out, env);
    std::printf("wrote %s (%d states, %d actions, tag %s)\n", out.c_str(), env.n_states,
                env.n_actions, env.tag.c_str());
    return 0;
}

int cmd_collect(const CommonOpts& opts, const std::string& env_path) {
    const ExperimentConfig cfg = resolve_config(opts);
    const std::uint64_t seed = cfg.seeds.front();
    FiniteCMP env;
    if (!env_path.empty()) {
        env = load_env(env_path);
    } else {
        env = build_env(cfg.env, Rng(seed).substream("env").next_u64());
    }
    const Dataset data =
        sample_trajectories(env, build_behavior(env, cfg.data), cfg.data.trajectories,
                            cfg.data.length, Rng(seed).substream("collect").next_u64());
    const std::string out = opts.out.empty() ? "data.ds" : opts.out;
    save_dataset(out, data);
    std::printf("wrote %s (%zu trajectories of length %d)\n", out.c_str(),
                data.trajectories.size(), cfg.data.length);
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    for (const std::uint64_t seed : cfg.seeds) {
        const RunArtifacts art = run_seed(cfg, seed);
        std::printf("seed %llu trained; checkpoints in %s\n",
                    static_cast<unsigned long long>(seed), art.run_dir.c_str());
    }
    return 0;
}

int cmd_plan(const CommonOpts& opts, int goal) {
    // --out names the edge-list dump; the run directory comes from the config.
    CommonOpts run_opts = opts;
    run_opts.out.clear();
    LoadedRun run = prepare_run(run_opts);
    if (goal < 0 || goal >= run.env.n_states) throw ConfigError("plan goal out of range");

    // Build the asymmetric goal-conditioned graph and dump its edge list.
    const double beta = run.cfg.plan.beta >= 0.0 ? run.cfg.plan.beta : run.cfg.train.beta;
    std::set<int> seen;
    for (const auto& tr : run.data.trajectories) seen.insert(tr.states.begin(), tr.states.end());
    std::vector<int> ids(seen.begin(), seen.end());
    Eigen::MatrixXd emb(run.state.phi.net.output_dim(), ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        emb.col(i) = net_forward_vec(run.state.phi.net, run.state.feat(ids[i]));
    const Coreset coreset = dpp_greedy_coreset(emb, ids, run.cfg.plan.coreset_budget,
                                               run.cfg.plan.coreset_sigma);
    const Eigen::VectorXd omega_g =
        net_forward_vec(run.state.task.net, run.state.feat(goal));
    const CostMatrix cost = cost_matrix(coreset, omega_g, goal, beta);
    const PlanGraph graph = construct_graph(cost, run.cfg.plan.k);

    const std::string out =
        opts.out.empty() ? (fs::path(run.run_dir) / "graph.edges").string() : opts.out;
    std::ostringstream text;
    text << "# src dst cost (goal " << goal << ", beta " << beta << ")\n";
    for (int v = 0; v < graph.n; ++v)
        for (const auto& [u, w] : graph.adj[v])  // reversed storage: forward edge u -> v
            text << coreset.members[u] << " " << coreset.members[v] << " "
                 << CsvWriter::format(w) << "\n";
    write_text_file(out, text.str());
    std::printf("wrote %s (%d vertices)\n", out.c_str(), graph.n);
    return 0;
}

int cmd_eval(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const auto results = run_experiment(cfg);
    for (const auto& art : results) {
        std::printf("%s\n", art.run_dir.c_str());
        for (const auto& row : art.eval_rows)
            std::printf("  %-10s goal %3d  success %.3f  mean_steps %.1f\n",
                        planner_to_string(row.planner).c_str(), row.goal, row.success_rate,
                        row.mean_steps);
    }
    return 0;
}

int cmd_verify(const CommonOpts& opts) {
    const std::uint64_t seed = opts.seed >= 0 ? static_cast<std::uint64_t>(opts.seed) : 0;
    const std::string csv = opts.out.empty() ? "verify.csv" : opts.out;
    const auto suites = run_verify_suites(seed, csv);
    bool all_pass = true;
    for (const auto& suite : suites) {
        std::printf("[%s] %-16s %d cases, worst %.3e\n", suite.pass ? "PASS" : "FAIL",
                    suite.name.c_str(), suite.cases, suite.worst);
        all_pass = all_pass && suite.pass;
    }
    std::printf("report: %s\n", csv.c_str());
    return all_pass ? 0 : 3;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out) {
    std::vector<std::string> dirs = run_dirs;
    if (dirs.size() == 1 && fs::is_directory(dirs[0]) &&
        !file_exists((fs::path(dirs[0]) / "eval.csv").string())) {
        // A parent directory of per-seed runs.
        dirs.clear();
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(run_dirs[0]))
            if (entry.is_directory() &&
                file_exists((entry.path() / "eval.csv").string()))
                names.push_back(entry.path().string());
        std::sort(names.begin(), names.end());
        dirs = names;
    }
    if (dirs.empty()) throw IoError("no run directories with eval.csv found");

    const auto report = aggregate_runs(dirs);
    std::printf("%-12s %8s %8s %10s %6s\n", "planner", "mean", "std", "mean_steps", "seeds");
    for (const auto& row : report)
        std::printf("%-12s %8.3f %8.3f %10.2f %6d\n", planner_to_string(row.planner).c_str(),
                    row.mean_success, row.std_success, row.mean_steps, row.seeds);
    if (!out.empty()) {
        CsvWriter csv(out, {"planner", "mean_success", "std_success", "mean_steps", "seeds"});
        for (const auto& row : report)
            csv.write_row({planner_to_string(row.planner), CsvWriter::format(row.mean_success),
                           CsvWriter::format(row.std_success), CsvWriter::format(row.mean_steps),
                           CsvWriter::format(row.seeds)});
        std::printf("report: %s\n", out.c_str());
    }
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"hitting-time geometry workbench"};
    app.require_subcommand(1);

    CommonOpts gen_opts, collect_opts, train_opts, plan_opts, eval_opts, verify_opts;
    std::string collect_env, report_out;
    int plan_goal = 0;
    std::vector<std::string> report_dirs;

    add_common(app.add_subcommand("gen-env", "generate an environment file"), gen_opts, true);
    auto* collect = app.add_subcommand("collect", "sample an offline dataset");
    add_common(collect, collect_opts, true);
    collect->add_option("--env", collect_env, "environment file (else generated from config)");
    add_common(app.add_subcommand("train", "run the three training phases"), train_opts, true);
    auto* plan = app.add_subcommand("plan", "build a planning graph and dump its edges");
    add_common(plan, plan_opts, true);
    plan->add_option("--goal", plan_goal, "goal state index")->required();
    add_common(app.add_subcommand("eval", "full pipeline + evaluation (resumes artifacts)"),
               eval_opts, true);
    auto* verify = app.add_subcommand("verify", "run the exact-oracle verification suites");
    verify->add_option("--seed", verify_opts.seed, "suite seed");
    verify->add_option("--out", verify_opts.out, "CSV output path");
    auto* report = app.add_subcommand("report", "aggregate run directories");
    report->add_option("--runs", report_dirs, "run directories (or one parent directory)")
        ->required();
    report->add_option("--out", report_out, "CSV output path");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        std::printf("%s", app.help().c_str());
        return 0;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n%s", e.what(), app.help().c_str());
        return 2;
    }

    try {
        if (app.got_subcommand("gen-env")) return cmd_gen_env(gen_opts);
        if (app.got_subcommand("collect")) return cmd_collect(collect_opts, collect_env);
        if (app.got_subcommand("train")) return cmd_train(train_opts);
        if (app.got_subcommand("plan")) return cmd_plan(plan_opts, plan_goal);
        if (app.got_subcommand("eval")) return cmd_eval(eval_opts);
        if (app.got_subcommand("verify")) return cmd_verify(verify_opts);
        if (app.got_subcommand("report")) return cmd_report(report_dirs, report_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const VerificationFailure& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

}  // namespace hitgeo
