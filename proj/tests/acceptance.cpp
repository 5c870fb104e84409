#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>

#include "hitgeo/cli.hpp"
#include "hitgeo/experiment.hpp"
#include "hitgeo/io.hpp"
#include "support.hpp"

// Acceptance suite: every criterion prints one verdict line. Tolerances and
// thresholds are pinned here, not configurable.

using namespace hitgeo;

namespace {

namespace fs = std::filesystem;

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void verdict(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
}

std::string tmp_dir(const std::string& name) {
    const auto path = fs::temp_directory_path() / ("hitgeo_accept_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
    return path.string();
}

double median8(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[3] + v[4]);
}

Eigen::MatrixXd random_embeddings(int d, int n, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Eigen::MatrixXd m(d, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < d; ++i) m(i, j) = scale * rng.normal();
    return m;
}

double kernel_logdet(const Eigen::MatrixXd& emb, const std::vector<int>& subset, double sigma) {
    const int m = static_cast<int>(subset.size());
    Eigen::MatrixXd K(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const double d2 = (emb.col(subset[i]) - emb.col(subset[j])).squaredNorm();
            K(i, j) = std::exp(-d2 / (2.0 * sigma * sigma));
        }
    return std::log(std::max(K.determinant(), 1e-300));
}

}  // namespace

TEST_CASE("criterion 1: Poisson-oracle consistency") {
    Stopwatch watch;
    const SuiteResult suite = suite_poisson(50, 3, 100000, 101);
    const double elapsed = watch.seconds();
    const bool pass = suite.pass && elapsed < 60.0;
    verdict(1, pass,
            "50 chains, Bellman residual < 1e-9 (worst " + CsvWriter::format(suite.worst) +
                "), 3 Monte Carlo chains within 3 SE, " + CsvWriter::format(elapsed) + " s");
    CHECK(suite.pass);
    CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 2: exact linear hitting-time representation") {
    Stopwatch watch;
    const SuiteResult suite = suite_representation(20, 102);
    const double elapsed = watch.seconds();
    const bool pass = suite.pass && elapsed < 30.0;
    verdict(2, pass,
            "20 one-hot CMPs, all goals, max readout error " + CsvWriter::format(suite.worst) +
                " < 1e-8, " + CsvWriter::format(elapsed) + " s");
    CHECK(suite.pass);
    CHECK(elapsed < 30.0);
}

TEST_CASE("criterion 3: displacement-isomorphism recovery") {
    Stopwatch watch;
    const SuiteResult suite = suite_isomorphism(20, 103);
    const double elapsed = watch.seconds();
    const bool pass = suite.pass && elapsed < 10.0;
    verdict(3, pass,
            "rotated residual < 1e-8 (worst " + CsvWriter::format(suite.worst) +
                "), random-pair floor 0.1 held, " + CsvWriter::format(elapsed) + " s");
    CHECK(suite.pass);
    CHECK(elapsed < 10.0);
}

TEST_CASE("criterion 4: effective-horizon error bound") {
    Stopwatch watch;
    const SuiteResult suite = suite_bound(100, 3, 104);
    const double elapsed = watch.seconds();
    const bool pass = suite.pass && elapsed < 120.0;
    verdict(4, pass,
            "100 chains x eps {1e-3,1e-2,1e-1}, zero violations (worst ratio " +
                CsvWriter::format(suite.worst) + "), " + CsvWriter::format(elapsed) + " s");
    CHECK(suite.pass);
    CHECK(elapsed < 120.0);
}

TEST_CASE("criterion 5: gradient exactness of the three losses") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        worst = std::max({worst, hitgeo::testing::emb_grad_max_rel_err(seed),
                          hitgeo::testing::nce_grad_max_rel_err(seed),
                          hitgeo::testing::policy_grad_max_rel_err(seed)});
    }
    const bool pass = worst < 1e-5;
    verdict(5, pass,
            "emb/nce/policy losses, 10 configurations each, worst rel err " +
                CsvWriter::format(worst));
    CHECK(worst < 1e-5);
}

TEST_CASE("criterion 6: closed-form loss values") {
    bool pass = true;

    // InfoNCE crafted batches, 1e-9.
    {
        TaskEncoder enc;
        enc.net = DenseNet::make({3, 4, 2}, Activation::gelu, 3);
        Eigen::MatrixXd one(3, 1);
        one << 0.4, -0.2, 1.0;
        Rng rng(4);
        pass = pass && nce_loss(enc, one, 0.1, 0.05, rng, nullptr) == 0.0;

        TaskEncoder zero;
        zero.net = DenseNet::make({2, 3, 2}, Activation::relu, 5);
        for (auto& w : zero.net.weights) w.setZero();
        Eigen::MatrixXd four(2, 4);
        four << 1.0, -1.0, 0.5, 0.25, 0.0, 2.0, -0.5, 1.5;
        pass = pass &&
               std::abs(nce_loss(zero, four, 0.1, 0.0, rng, nullptr) - 1.3862943611198906) < 1e-9;

        TaskEncoder ident;
        ident.net = DenseNet::make({2, 2}, Activation::relu, 0);
        ident.net.weights[0] = Eigen::MatrixXd::Identity(2, 2);
        Eigen::MatrixXd two(2, 2);
        two << 1.0, -1.0, 0.0, 0.0;
        pass = pass &&
               std::abs(nce_loss(ident, two, 0.1, 0.0, rng, nullptr) - 2.061153620314381e-9) <
                   1e-9;
    }

    // Expectile weights, discounted labels, directed score, 1e-12.
    pass = pass && std::abs(expectile_weight(0.95, -1.0) - 0.05) < 1e-12;
    pass = pass && std::abs(expectile_weight(0.5, 3.0) - 0.5) < 1e-12 &&
           std::abs(expectile_weight(0.5, -3.0) - 0.5) < 1e-12;
    pass = pass && std::abs(discounted_hitting_label(1, 0.99) - 1.0) < 1e-12;
    pass = pass && std::abs(discounted_hitting_label(10, 0.99) - 9.56179249911955) < 1e-12;
    {
        Eigen::Vector2d origin(0.0, 0.0), behind(-1.0, 0.0), omega(1.0, 0.0);
        pass = pass &&
               std::abs(directed_score(origin, behind, omega, 0.1) - 1.2214027581601699) < 1e-12;
        Eigen::Vector2d ahead(1.0, 0.0);
        pass = pass && std::abs(directed_score(origin, ahead, omega, 0.0) - 1.0) < 1e-12;
    }
    verdict(6, pass, "InfoNCE crafted batches at 1e-9; scalar examples at 1e-12");
    CHECK(pass);
}

TEST_CASE("criterion 7: planner correctness") {
    bool dijkstra_ok = true, connect_ok = true, sym_ok = true, triangle_ok = true;

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const int n = 5 + static_cast<int>(seed % 46);
        Coreset cs;
        cs.embeddings = random_embeddings(3, n, 7000 + seed);
        cs.members.resize(n);
        for (int i = 0; i < n; ++i) cs.members[i] = i;
        const CostMatrix cm =
            cost_matrix(cs, random_embeddings(3, 1, 7100 + seed).col(0), 0, 0.2);
        const PlanGraph g = construct_graph(cm, 3);
        connect_ok = connect_ok && graph_strongly_connected(g);
        const int source = static_cast<int>(seed) % n;
        const ShortestPaths sp = shortest_paths(g, source);
        const std::vector<double> bf = bellman_ford_distances(g, source);
        for (int v = 0; v < n; ++v) dijkstra_ok = dijkstra_ok && sp.dist[v] == bf[v];

        const CostMatrix sym =
            cost_matrix(cs, Eigen::VectorXd::Zero(3), 0, 0.0);
        sym_ok = sym_ok && (sym.c - sym.c.transpose()).cwiseAbs().maxCoeff() <= 1e-12;
    }

    for (std::uint64_t seed = 0; seed < 20 && triangle_ok; ++seed) {
        const int n = 5 + static_cast<int>(seed % 8);
        Coreset cs;
        cs.embeddings = random_embeddings(3, n, 7200 + seed);
        cs.members.resize(n);
        for (int i = 0; i < n; ++i) cs.members[i] = i;
        const CostMatrix cm =
            cost_matrix(cs, random_embeddings(3, 1, 7300 + seed).col(0), 0, 0.1);
        const PlanGraph g = construct_graph(cm, 2);
        // All-pairs relaxation to a floating-point fixpoint; the triangle
        // inequality then holds exactly by composition.
        const double inf = std::numeric_limits<double>::infinity();
        Eigen::MatrixXd D = Eigen::MatrixXd::Constant(n, n, inf);
        for (int i = 0; i < n; ++i) D(i, i) = 0.0;
        for (int v = 0; v < n; ++v)
            for (const auto& [u, w] : g.adj[v]) D(u, v) = std::min(D(u, v), w);
        bool changed = true;
        while (changed) {
            changed = false;
            for (int k = 0; k < n; ++k)
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        if (D(i, k) + D(k, j) < D(i, j)) {
                            D(i, j) = D(i, k) + D(k, j);
                            changed = true;
                        }
        }
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                for (int c = 0; c < n; ++c)
                    triangle_ok = triangle_ok && D(a, c) <= D(a, b) + D(b, c);
    }

    const bool pass = dijkstra_ok && connect_ok && sym_ok && triangle_ok;
    verdict(7, pass,
            std::string("Dijkstra == Bellman-Ford on 100 graphs (") +
                (dijkstra_ok ? "exact" : "MISMATCH") + "), post-MST connectivity " +
                (connect_ok ? "ok" : "BROKEN") + ", beta=0 symmetry " +
                (sym_ok ? "<= 1e-12" : "BROKEN") + ", all-pairs triangle " +
                (triangle_ok ? "exact" : "VIOLATED"));
    CHECK(pass);
}

TEST_CASE("criterion 8: DPP greedy against the exhaustive oracle") {
    bool optimal_ok = true, dup_ok = true;

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(3000 + seed);
        const int budget = 2 + static_cast<int>(seed % 3);
        const int n_clusters = 4 + static_cast<int>(seed % 3);
        Eigen::MatrixXd centers(2, n_clusters);
        for (int c = 0; c < n_clusters; ++c) {
            centers(0, c) = 8.0 * std::cos(6.2831853 * c / n_clusters);
            centers(1, c) = 8.0 * std::sin(6.2831853 * c / n_clusters);
        }
        Eigen::MatrixXd emb(2, 12);
        for (int j = 0; j < 12; ++j)
            emb.col(j) = centers.col(rng.uniform_int(n_clusters)) +
                         0.02 * Eigen::Vector2d(rng.normal(), rng.normal());
        std::vector<int> ids(12);
        for (int i = 0; i < 12; ++i) ids[i] = i;
        const Coreset cs = dpp_greedy_coreset(emb, ids, budget, 1.0);
        const double greedy_ld = kernel_logdet(emb, cs.members, 1.0);

        double best = -1e300;
        std::vector<int> idx(budget);
        for (int i = 0; i < budget; ++i) idx[i] = i;
        while (true) {
            best = std::max(best, kernel_logdet(emb, idx, 1.0));
            int pos = budget - 1;
            while (pos >= 0 && idx[pos] == 12 - budget + pos) --pos;
            if (pos < 0) break;
            ++idx[pos];
            for (int q = pos + 1; q < budget; ++q) idx[q] = idx[q - 1] + 1;
        }
        optimal_ok = optimal_ok && std::abs(greedy_ld - best) <= 1e-9 * (1.0 + std::abs(best));
    }

    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd emb = random_embeddings(2, 6, 8000 + trial);
        Eigen::MatrixXd dup(2, 12);
        dup << emb, emb;
        std::vector<int> ids(12);
        for (int i = 0; i < 12; ++i) ids[i] = i;
        const Coreset cs = dpp_greedy_coreset(dup, ids, 12, 1.0);
        dup_ok = dup_ok && cs.members.size() == 6;
        for (std::size_t i = 0; i < cs.members.size() && dup_ok; ++i)
            for (std::size_t j = i + 1; j < cs.members.size(); ++j)
                dup_ok = dup_ok && (dup.col(cs.members[i]) - dup.col(cs.members[j])).norm() > 0.0;
    }

    const bool pass = optimal_ok && dup_ok;
    verdict(8, pass,
            std::string("greedy == exhaustive optimum on 20 instances (") +
                (optimal_ok ? "ok" : "SUBOPTIMAL") + "), no duplicate selections (" +
                (dup_ok ? "ok" : "BROKEN") + ")");
    CHECK(pass);
}

TEST_CASE("criterion 9: end-to-end planner ordering on the one-way gridworld") {
    Stopwatch watch;

    ExperimentConfig cfg;
    cfg.env.kind = EnvKind::one_way_grid;
    cfg.env.width = 8;
    cfg.env.height = 8;
    cfg.env.slip = 0.05;
    // Serpentine one-way doors: descending is open everywhere; climbing back
    // requires the x=7 door through the lower line and the x=0 door through
    // the upper line.
    for (int c = 0; c < 7; ++c)
        cfg.env.one_way_edges.push_back({GridCell{c, 3}, GridCell{c, 4}});
    for (int c = 1; c < 8; ++c)
        cfg.env.one_way_edges.push_back({GridCell{c, 1}, GridCell{c, 2}});
    cfg.data.trajectories = 500;
    cfg.data.length = 60;
    cfg.train.gamma = 0.95;  // saturating discount keeps the long range honestly hard
    cfg.train.beta = 0.5;
    cfg.train.latent_dim = 16;
    cfg.train.hidden_dims = {64};
    cfg.train.batch = 256;
    cfg.train.phase_steps = {300, 8000, 8000};
    cfg.train.h_max = 10;
    cfg.train.lr = 1e-3;
    cfg.plan.k = 10;
    cfg.plan.coreset_sigma = 20.0;
    cfg.plan.coreset_budget = 40;
    cfg.plan.beta = 0.1;
    cfg.eval.planners = {PlannerKind::asym_graph, PlannerKind::sym_graph, PlannerKind::direct,
                         PlannerKind::rec_mid};
    cfg.eval.goals = {0, 7, 18, 29, 39, 60};
    cfg.eval.episodes = 100;
    cfg.eval.max_steps = 30;
    cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7};
    cfg.out_dir = tmp_dir("c9");

    const auto runs = run_experiment(cfg);
    std::map<std::string, std::vector<double>> per;
    for (const auto& art : runs) {
        std::map<std::string, std::pair<double, int>> agg;
        for (const auto& r : art.eval_rows) {
            agg[planner_to_string(r.planner)].first += r.success_rate;
            agg[planner_to_string(r.planner)].second += 1;
        }
        for (auto& [k, v] : agg) per[k].push_back(v.first / v.second);
    }
    const double asym = median8(per["asym_graph"]);
    const double sym = median8(per["sym_graph"]);
    const double direct = median8(per["direct"]);
    const double rec_mid = median8(per["rec_mid"]);

    // Asymmetry witness diagnostic on the trained encoders.
    std::vector<double> ratios;
    for (const auto& art : runs) {
        const std::string dir = art.run_dir + "/";
        FiniteCMP env = load_env(dir + "env.env");
        Dataset data = load_dataset(dir + "data.ds");
        ExperimentConfig run_cfg = load_config(dir + "config.ini");
        run_cfg.train.seed = run_cfg.seeds.front();
        TrainState st = make_train_state(env, run_cfg.train);
        st.task.net = load_checkpoint(dir + "task.ckpt").net;
        st.phi.net = load_checkpoint(dir + "phi.ckpt").net;
        st.phi.target = load_checkpoint(dir + "phi_target.ckpt").net;
        st.policy.net = load_checkpoint(dir + "policy.ckpt").net;
        st.task.frozen = st.phi.frozen = st.policy.frozen = true;
        st.phase_done = 2;
        PlanSpec witness_plan = run_cfg.plan;
        witness_plan.beta = run_cfg.train.beta;
        ratios.push_back(max_cost_asymmetry(env, st, data, witness_plan, run_cfg.train));
    }
    const double witness = median8(ratios);

    const double elapsed = watch.seconds();
    const bool ordering = asym >= sym && sym >= direct;
    const bool level = asym >= 0.5;
    const bool runtime = elapsed < 600.0;
    const bool pass = ordering && level && runtime && witness > 1.05;
    verdict(9, pass,
            "medians: asym " + CsvWriter::format(asym) + ", sym " + CsvWriter::format(sym) +
                ", direct " + CsvWriter::format(direct) + ", rec_mid " +
                CsvWriter::format(rec_mid) + "; witness ratio " + CsvWriter::format(witness) +
                ", " + CsvWriter::format(elapsed) + " s");
    // Graph planners separate cleanly from the recursive-midpoint baseline
    // at this scale.
    CHECK(asym >= sym);
    CHECK(sym >= rec_mid);
    // Direct latent pursuit has tied or beaten both graph planners on every
    // desk-scale configuration measured for this suite; the full ordering is
    // asserted regardless so the gap stays visible if it ever closes.
    CHECK(sym >= direct);
    CHECK(level);
    CHECK(runtime);
    CHECK(witness > 1.05);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("criterion 10: bitwise determinism of full runs") {
    const std::string dir = tmp_dir("c10");
    ExperimentConfig cfg;
    cfg.env.width = 3;
    cfg.env.height = 3;
    cfg.env.slip = 0.0;
    cfg.data.trajectories = 16;
    cfg.data.length = 10;
    cfg.train.latent_dim = 4;
    cfg.train.hidden_dims = {12};
    cfg.train.h_max = 3;
    cfg.train.batch = 24;
    cfg.train.phase_steps = {15, 25, 25};
    cfg.eval.planners = {PlannerKind::asym_graph, PlannerKind::direct};
    cfg.eval.goals = {0, 8};
    cfg.eval.episodes = 4;
    cfg.eval.max_steps = 15;
    cfg.seeds = {0};
    cfg.out_dir = dir + "/runs";

    const char* artifacts[] = {"task.ckpt",   "phi.ckpt", "phi_target.ckpt", "policy.ckpt",
                               "eval.csv",    "env.env",  "data.ds",         "summary.txt",
                               "config.ini"};
    run_experiment(cfg);
    std::map<std::string, std::string> first;
    for (const char* name : artifacts)
        first[name] = read_text_file(cfg.out_dir + "/seed_0/" + name);
    fs::remove_all(cfg.out_dir);
    run_experiment(cfg);

    bool pass = true;
    for (const char* name : artifacts)
        pass = pass && read_text_file(cfg.out_dir + "/seed_0/" + name) == first[name];
    verdict(10, pass, "checkpoints, datasets, and reports byte-identical across reruns");
    CHECK(pass);
    fs::remove_all(dir);
}
