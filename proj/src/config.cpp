#include "hitgeo/config.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "hitgeo/io.hpp"

namespace hitgeo {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) parts.push_back(trim(item));
    return parts;
}

int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("key '" + key + "': bad integer '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("key '" + key + "': bad seed '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("key '" + key + "': bad number '" + v + "'");
    return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (const auto& part : split(v, ','))
        if (!part.empty()) out.push_back(to_int(key, part));
    return out;
}

// Edge syntax: "x1,y1>x2,y2 ; x3,y3>x4,y4".
std::vector<OneWayEdge> to_edges(const std::string& key, const std::string& v) {
    std::vector<OneWayEdge> edges;
    for (const auto& item : split(v, ';')) {
        if (item.empty()) continue;
        const auto arrow = item.find('>');
        if (arrow == std::string::npos) throw ConfigError("key '" + key + "': missing '>'");
        const auto a = to_int_list(key, item.substr(0, arrow));
        const auto b = to_int_list(key, item.substr(arrow + 1));
        if (a.size() != 2 || b.size() != 2)
            throw ConfigError("key '" + key + "': edges are x1,y1>x2,y2");
        edges.push_back({GridCell{a[0], a[1]}, GridCell{b[0], b[1]}});
    }
    return edges;
}

std::string edges_to_string(const std::vector<OneWayEdge>& edges) {
    std::string out;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (i) out += "; ";
        out += std::to_string(edges[i].first.x) + "," + std::to_string(edges[i].first.y) + ">" +
               std::to_string(edges[i].second.x) + "," + std::to_string(edges[i].second.y);
    }
    return out;
}

void set_key(ExperimentConfig& cfg, const std::string& section, const std::string& key,
             const std::string& value) {
    const std::string id = section + "." + key;
    if (section == "env") {
        if (key == "kind") {
            if (value == "one_way_grid")
                cfg.env.kind = EnvKind::one_way_grid;
            else if (value == "random_digraph")
                cfg.env.kind = EnvKind::random_digraph;
            else
                throw ConfigError("unknown env kind '" + value + "'");
        } else if (key == "width")
            cfg.env.width = to_int(id, value);
        else if (key == "height")
            cfg.env.height = to_int(id, value);
        else if (key == "slip")
            cfg.env.slip = to_double(id, value);
        else if (key == "one_way_edges")
            cfg.env.one_way_edges = to_edges(id, value);
        else if (key == "n_states")
            cfg.env.n_states = to_int(id, value);
        else if (key == "n_actions")
            cfg.env.n_actions = to_int(id, value);
        else if (key == "out_degree")
            cfg.env.out_degree = to_int(id, value);
        else
            throw ConfigError("unknown key '" + id + "'");
    } else if (section == "data") {
        if (key == "trajectories")
            cfg.data.trajectories = to_int(id, value);
        else if (key == "length")
            cfg.data.length = to_int(id, value);
        else if (key == "behavior") {
            if (value == "uniform")
                cfg.data.behavior = BehaviorKind::uniform;
            else if (value == "goal_seek")
                cfg.data.behavior = BehaviorKind::goal_seek;
            else
                throw ConfigError("unknown behavior '" + value + "'");
        } else if (key == "behavior_eps")
            cfg.data.behavior_eps = to_double(id, value);
        else if (key == "behavior_goal")
            cfg.data.behavior_goal = to_int(id, value);
        else
            throw ConfigError("unknown key '" + id + "'");
    } else if (section == "train") {
        if (key == "gamma")
            cfg.train.gamma = to_double(id, value);
        else if (key == "tau_v")
            cfg.train.tau_v = to_double(id, value);
        else if (key == "tau_h")
            cfg.train.tau_h = to_double(id, value);
        else if (key == "beta")
            cfg.train.beta = to_double(id, value);
        else if (key == "kappa")
            cfg.train.kappa = to_double(id, value);
        else if (key == "h_max")
            cfg.train.h_max = to_int(id, value);
        else if (key == "latent_dim")
            cfg.train.latent_dim = to_int(id, value);
        else if (key == "temp_nce")
            cfg.train.temp_nce = to_double(id, value);
        else if (key == "aug_sigma")
            cfg.train.aug_sigma = to_double(id, value);
        else if (key == "phase_steps") {
            const auto steps = to_int_list(id, value);
            if (steps.size() != 3) throw ConfigError("phase_steps needs exactly 3 entries");
            cfg.train.phase_steps = {steps[0], steps[1], steps[2]};
        } else if (key == "batch")
            cfg.train.batch = to_int(id, value);
        else if (key == "lr")
            cfg.train.lr = to_double(id, value);
        else if (key == "target_tau")
            cfg.train.target_tau = to_double(id, value);
        else if (key == "actor_temp")
            cfg.train.actor_temp = to_double(id, value);
        else if (key == "hidden_dims")
            cfg.train.hidden_dims = to_int_list(id, value);
        else if (key == "activation")
            cfg.train.activation = activation_from_string(value);
        else if (key == "features") {
            if (value == "onehot")
                cfg.train.coord_features = false;
            else if (value == "coords")
                cfg.train.coord_features = true;
            else
                throw ConfigError("unknown features '" + value + "'");
        } else if (key == "goal_future_weight")
            cfg.train.goal_scheme.future_weight = to_double(id, value);
        else if (key == "goal_geometric_p")
            cfg.train.goal_scheme.geometric_p = to_double(id, value);
        else
            throw ConfigError("unknown key '" + id + "'");
    } else if (section == "plan") {
        if (key == "k")
            cfg.plan.k = to_int(id, value);
        else if (key == "coreset_sigma")
            cfg.plan.coreset_sigma = to_double(id, value);
        else if (key == "coreset_budget")
            cfg.plan.coreset_budget = to_int(id, value);
        else if (key == "rec_mid_depth")
            cfg.plan.rec_mid_depth = to_int(id, value);
        else if (key == "beta")
            cfg.plan.beta = to_double(id, value);
        else
            throw ConfigError("unknown key '" + id + "'");
    } else if (section == "eval") {
        if (key == "planners") {
            cfg.eval.planners.clear();
            for (const auto& name : split(value, ','))
                if (!name.empty()) cfg.eval.planners.push_back(planner_from_string(name));
        } else if (key == "goals") {
            if (value.rfind("auto:", 0) == 0) {
                cfg.eval.goals.clear();
                cfg.eval.auto_goals = to_int(id, value.substr(5));
            } else {
                cfg.eval.goals = to_int_list(id, value);
            }
        } else if (key == "episodes")
            cfg.eval.episodes = to_int(id, value);
        else if (key == "max_steps")
            cfg.eval.max_steps = to_int(id, value);
        else if (key == "mode") {
            if (value == "sample")
                cfg.eval.mode = ActMode::sample;
            else if (value == "greedy")
                cfg.eval.mode = ActMode::greedy;
            else
                throw ConfigError("unknown eval mode '" + value + "'");
        } else
            throw ConfigError("unknown key '" + id + "'");
    } else if (section == "run") {
        if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& part : split(value, ','))
                if (!part.empty()) cfg.seeds.push_back(to_u64(id, part));
        } else if (key == "out")
            cfg.out_dir = value;
        else
            throw ConfigError("unknown key '" + id + "'");
    } else {
        throw ConfigError("unknown section '" + section + "'");
    }
}

}  // namespace

PlannerKind planner_from_string(const std::string& s) {
    if (s == "rec_mid") return PlannerKind::rec_mid;
    if (s == "sym_graph") return PlannerKind::sym_graph;
    if (s == "asym_graph") return PlannerKind::asym_graph;
    if (s == "direct") return PlannerKind::direct;
    throw ConfigError("unknown planner '" + s + "'");
}

std::string planner_to_string(PlannerKind kind) {
    switch (kind) {
        case PlannerKind::rec_mid: return "rec_mid";
        case PlannerKind::sym_graph: return "sym_graph";
        case PlannerKind::asym_graph: return "asym_graph";
        case PlannerKind::direct: return "direct";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    train.validate();
    if (env.kind == EnvKind::one_way_grid) {
        if (env.width < 1 || env.height < 1 || env.width * env.height < 2)
            throw ConfigError("grid too small");
        if (env.slip < 0.0 || env.slip >= 1.0) throw ConfigError("slip out of range");
    } else {
        if (env.n_states < 2 || env.n_actions < 1 || env.out_degree < 1)
            throw ConfigError("bad random_digraph spec");
    }
    if (data.trajectories < 1 || data.length < 1) throw ConfigError("bad data spec");
    if (data.length <= train.h_max)
        throw ConfigError("trajectory length must exceed h_max");
    if (plan.k < 1 || plan.coreset_budget < 2 || plan.coreset_sigma <= 0.0)
        throw ConfigError("bad plan spec");
    if (plan.rec_mid_depth < 1) throw ConfigError("rec_mid_depth must be >= 1");
    if (eval.episodes < 1 || eval.max_steps < 0) throw ConfigError("bad eval spec");
    if (eval.goals.empty() && eval.auto_goals < 1) throw ConfigError("no eval goals");
    if (eval.planners.empty()) throw ConfigError("no planners selected");
    if (seeds.empty()) throw ConfigError("no seeds");
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key outside a section");
        set_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config_text(read_text_file(path));
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be section.key=value");
    const std::string path = trim(assignment.substr(0, eq));
    const auto dot = path.find('.');
    if (dot == std::string::npos) throw ConfigError("override must be section.key=value");
    set_key(cfg, path.substr(0, dot), path.substr(dot + 1), trim(assignment.substr(eq + 1)));
}

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[env]\n";
    out << "kind = " << (cfg.env.kind == EnvKind::one_way_grid ? "one_way_grid" : "random_digraph")
        << "\n";
    if (cfg.env.kind == EnvKind::one_way_grid) {
        out << "width = " << cfg.env.width << "\n";
        out << "height = " << cfg.env.height << "\n";
        out << "slip = " << fmt(cfg.env.slip) << "\n";
        if (!cfg.env.one_way_edges.empty())
            out << "one_way_edges = " << edges_to_string(cfg.env.one_way_edges) << "\n";
    } else {
        out << "n_states = " << cfg.env.n_states << "\n";
        out << "n_actions = " << cfg.env.n_actions << "\n";
        out << "out_degree = " << cfg.env.out_degree << "\n";
    }
    out << "\n[data]\n";
    out << "trajectories = " << cfg.data.trajectories << "\n";
    out << "length = " << cfg.data.length << "\n";
    out << "behavior = " << (cfg.data.behavior == BehaviorKind::uniform ? "uniform" : "goal_seek")
        << "\n";
    if (cfg.data.behavior == BehaviorKind::goal_seek) {
        out << "behavior_eps = " << fmt(cfg.data.behavior_eps) << "\n";
        out << "behavior_goal = " << cfg.data.behavior_goal << "\n";
    }
    out << "\n[train]\n";
    out << "gamma = " << fmt(cfg.train.gamma) << "\n";
    out << "tau_v = " << fmt(cfg.train.tau_v) << "\n";
    out << "tau_h = " << fmt(cfg.train.tau_h) << "\n";
    out << "beta = " << fmt(cfg.train.beta) << "\n";
    out << "kappa = " << fmt(cfg.train.kappa) << "\n";
    out << "h_max = " << cfg.train.h_max << "\n";
    out << "latent_dim = " << cfg.train.latent_dim << "\n";
    out << "temp_nce = " << fmt(cfg.train.temp_nce) << "\n";
    out << "aug_sigma = " << fmt(cfg.train.aug_sigma) << "\n";
    out << "phase_steps = " << cfg.train.phase_steps[0] << "," << cfg.train.phase_steps[1] << ","
        << cfg.train.phase_steps[2] << "\n";
    out << "batch = " << cfg.train.batch << "\n";
    out << "lr = " << fmt(cfg.train.lr) << "\n";
    out << "target_tau = " << fmt(cfg.train.target_tau) << "\n";
    out << "actor_temp = " << fmt(cfg.train.actor_temp) << "\n";
    out << "hidden_dims = ";
    for (std::size_t i = 0; i < cfg.train.hidden_dims.size(); ++i)
        out << (i ? "," : "") << cfg.train.hidden_dims[i];
    out << "\n";
    out << "activation = " << activation_to_string(cfg.train.activation) << "\n";
    out << "features = " << (cfg.train.coord_features ? "coords" : "onehot") << "\n";
    out << "goal_future_weight = " << fmt(cfg.train.goal_scheme.future_weight) << "\n";
    out << "goal_geometric_p = " << fmt(cfg.train.goal_scheme.geometric_p) << "\n";
    out << "\n[plan]\n";
    out << "k = " << cfg.plan.k << "\n";
    out << "coreset_sigma = " << fmt(cfg.plan.coreset_sigma) << "\n";
    out << "coreset_budget = " << cfg.plan.coreset_budget << "\n";
    out << "rec_mid_depth = " << cfg.plan.rec_mid_depth << "\n";
    if (cfg.plan.beta >= 0.0) out << "beta = " << fmt(cfg.plan.beta) << "\n";
    out << "\n[eval]\n";
    out << "planners = ";
    for (std::size_t i = 0; i < cfg.eval.planners.size(); ++i)
        out << (i ? "," : "") << planner_to_string(cfg.eval.planners[i]);
    out << "\n";
    if (cfg.eval.goals.empty()) {
        out << "goals = auto:" << cfg.eval.auto_goals << "\n";
    } else {
        out << "goals = ";
        for (std::size_t i = 0; i < cfg.eval.goals.size(); ++i)
            out << (i ? "," : "") << cfg.eval.goals[i];
        out << "\n";
    }
    out << "episodes = " << cfg.eval.episodes << "\n";
    out << "max_steps = " << cfg.eval.max_steps << "\n";
    out << "mode = " << (cfg.eval.mode == ActMode::sample ? "sample" : "greedy") << "\n";
    out << "\n[run]\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
    out << "\n";
    out << "out = " << cfg.out_dir << "\n";
    return out.str();
}

FiniteCMP build_env(const EnvSpec& spec, std::uint64_t seed) {
    if (spec.kind == EnvKind::one_way_grid)
        return make_one_way_gridworld(spec.width, spec.height, spec.one_way_edges, spec.slip);
    return make_random_digraph_cmp(spec.n_states, spec.n_actions, spec.out_degree, seed);
}

TabularPolicy build_behavior(const FiniteCMP& env, const DataSpec& spec) {
    if (spec.behavior == BehaviorKind::uniform) return uniform_policy(env);
    return goal_seeking_policy(env, spec.behavior_goal, spec.behavior_eps);
}

}  // namespace hitgeo
