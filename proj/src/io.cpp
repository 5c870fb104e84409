#include "hitgeo/io.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hitgeo {

namespace {

constexpr const char* kDatasetMagic = "HITGEO-DS";
constexpr const char* kEnvMagic = "HITGEO-ENV";
constexpr const char* kCkptMagic = "HITGEO-CKPT";
constexpr std::uint32_t kFormatVersion = 1;

bool text_mode(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".txt") == 0;
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc()) throw IoError("bad double '" + s + "'");
    return v;
}

struct BinWriter {
    std::ofstream out;
    explicit BinWriter(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw IoError("cannot open " + path + " for writing");
    }
    void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { bytes(&v, sizeof(v)); }
    void u64(std::uint64_t v) { bytes(&v, sizeof(v)); }
    void f64(double v) { bytes(&v, sizeof(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void magic(const char* m) { bytes(m, std::strlen(m)); }
};

struct BinReader {
    std::ifstream in;
    std::string path;
    explicit BinReader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw IoError("cannot open " + p);
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), n);
        if (!in) throw IoError("truncated file " + path);
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof(v));
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof(v));
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof(v));
        return v;
    }
    std::string str() {
        const auto n = u32();
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    void magic(const char* m) {
        std::string got(std::strlen(m), '\0');
        bytes(got.data(), got.size());
        if (got != m) throw IoError("bad magic in " + path + " (expected " + m + ")");
    }
};

}  // namespace

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
}

void save_dataset(const std::string& path, const Dataset& data) {
    if (text_mode(path)) {
        std::ostringstream out;
        out << kDatasetMagic << " " << kFormatVersion << "\n";
        out << "fingerprint " << data.env_fingerprint << "\n";
        out << "seed " << data.seed << "\n";
        out << "trajectories " << data.trajectories.size() << "\n";
        for (const auto& tr : data.trajectories) {
            out << "states";
            for (int s : tr.states) out << " " << s;
            out << "\nactions";
            for (int a : tr.actions) out << " " << a;
            out << "\n";
        }
        write_text_file(path, out.str());
        return;
    }
    BinWriter w(path);
    w.magic(kDatasetMagic);
    w.u32(kFormatVersion);
    w.u64(data.env_fingerprint);
    w.u64(data.seed);
    w.u32(static_cast<std::uint32_t>(data.trajectories.size()));
    for (const auto& tr : data.trajectories) w.u32(static_cast<std::uint32_t>(tr.length()));
    for (const auto& tr : data.trajectories)
        for (int s : tr.states) w.u32(static_cast<std::uint32_t>(s));
    for (const auto& tr : data.trajectories)
        for (int a : tr.actions) w.u32(static_cast<std::uint32_t>(a));
}

Dataset load_dataset(const std::string& path) {
    Dataset data;
    if (text_mode(path)) {
        std::istringstream in(read_text_file(path));
        std::string magic, key;
        std::uint32_t version;
        in >> magic >> version;
        if (magic != kDatasetMagic || version != kFormatVersion)
            throw IoError("bad dataset header in " + path);
        std::size_t n_traj = 0;
        in >> key >> data.env_fingerprint >> key >> data.seed >> key >> n_traj;
        data.trajectories.resize(n_traj);
        std::string line;
        std::getline(in, line);
        for (auto& tr : data.trajectories) {
            std::getline(in, line);
            std::istringstream ls(line);
            ls >> key;
            for (int v; ls >> v;) tr.states.push_back(v);
            std::getline(in, line);
            std::istringstream la(line);
            la >> key;
            for (int v; la >> v;) tr.actions.push_back(v);
            if (tr.states.size() != tr.actions.size() + 1) throw IoError("mismatched trajectory");
        }
        return data;
    }
    BinReader r(path);
    r.magic(kDatasetMagic);
    if (r.u32() != kFormatVersion) throw IoError("unsupported dataset version");
    data.env_fingerprint = r.u64();
    data.seed = r.u64();
    const auto n_traj = r.u32();
    std::vector<std::uint32_t> lens(n_traj);
    for (auto& l : lens) l = r.u32();
    data.trajectories.resize(n_traj);
    for (std::uint32_t i = 0; i < n_traj; ++i) {
        data.trajectories[i].states.resize(lens[i] + 1);
        for (auto& s : data.trajectories[i].states) s = static_cast<int>(r.u32());
    }
    for (std::uint32_t i = 0; i < n_traj; ++i) {
        data.trajectories[i].actions.resize(lens[i]);
        for (auto& a : data.trajectories[i].actions) a = static_cast<int>(r.u32());
    }
    return data;
}

void save_env(const std::string& path, const FiniteCMP& env) {
    if (text_mode(path)) {
        std::ostringstream out;
        out << kEnvMagic << " " << kFormatVersion << "\n";
        out << "tag " << (env.tag.empty() ? "-" : env.tag) << "\n";
        out << "states " << env.n_states << " actions " << env.n_actions << "\n";
        out << "coords " << (env.has_coords() ? 1 : 0) << "\n";
        if (env.has_coords())
            for (const auto& c : env.coords)
                out << fmt_double(c[0]) << " " << fmt_double(c[1]) << "\n";
        for (int a = 0; a < env.n_actions; ++a)
            for (int x = 0; x < env.n_states; ++x) {
                for (int y = 0; y < env.n_states; ++y)
                    out << (y ? " " : "") << fmt_double(env.kernel[a](x, y));
                out << "\n";
            }
        write_text_file(path, out.str());
        return;
    }
    BinWriter w(path);
    w.magic(kEnvMagic);
    w.u32(kFormatVersion);
    w.str(env.tag);
    w.u32(static_cast<std::uint32_t>(env.n_states));
    w.u32(static_cast<std::uint32_t>(env.n_actions));
    w.u32(env.has_coords() ? 1 : 0);
    if (env.has_coords())
        for (const auto& c : env.coords) {
            w.f64(c[0]);
            w.f64(c[1]);
        }
    for (const auto& m : env.kernel) w.bytes(m.data(), sizeof(double) * m.size());
}

FiniteCMP load_env(const std::string& path) {
    FiniteCMP env;
    if (text_mode(path)) {
        std::istringstream in(read_text_file(path));
        std::string magic, key, tag;
        std::uint32_t version;
        in >> magic >> version;
        if (magic != kEnvMagic || version != kFormatVersion)
            throw IoError("bad env header in " + path);
        in >> key >> tag;
        env.tag = tag == "-" ? "" : tag;
        int has_coords = 0;
        in >> key >> env.n_states >> key >> env.n_actions >> key >> has_coords;
        if (has_coords) {
            env.coords.resize(env.n_states);
            std::string sx, sy;
            for (auto& c : env.coords) {
                in >> sx >> sy;
                c = {parse_double(sx), parse_double(sy)};
            }
        }
        env.kernel.assign(env.n_actions, Eigen::MatrixXd::Zero(env.n_states, env.n_states));
        std::string cell;
        for (int a = 0; a < env.n_actions; ++a)
            for (int x = 0; x < env.n_states; ++x)
                for (int y = 0; y < env.n_states; ++y) {
                    in >> cell;
                    env.kernel[a](x, y) = parse_double(cell);
                }
        env.validate();
        return env;
    }
    BinReader r(path);
    r.magic(kEnvMagic);
    if (r.u32() != kFormatVersion) throw IoError("unsupported env version");
    env.tag = r.str();
    env.n_states = static_cast<int>(r.u32());
    env.n_actions = static_cast<int>(r.u32());
    if (r.u32()) {
        env.coords.resize(env.n_states);
        for (auto& c : env.coords) {
            c[0] = r.f64();
            c[1] = r.f64();
        }
    }
    env.kernel.assign(env.n_actions, Eigen::MatrixXd::Zero(env.n_states, env.n_states));
    for (auto& m : env.kernel) r.bytes(m.data(), sizeof(double) * m.size());
    env.validate();
    return env;
}

void save_checkpoint(const std::string& path, const DenseNet& net, const OptimizerState* opt) {
    BinWriter w(path);
    w.magic(kCkptMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(net.layer_dims.size()));
    for (int d : net.layer_dims) w.u32(static_cast<std::uint32_t>(d));
    w.str(activation_to_string(net.activation));
    w.u64(net.init_seed);
    const auto flat = net.flatten_params();
    w.u64(flat.size());
    w.bytes(flat.data(), sizeof(double) * flat.size());
    w.u32(opt ? 1 : 0);
    if (opt) {
        w.u64(opt->step);
        w.f64(opt->learning_rate);
        w.f64(opt->beta1);
        w.f64(opt->beta2);
        w.f64(opt->eps_stab);
        for (std::size_t l = 0; l < opt->mW.size(); ++l) {
            w.bytes(opt->mW[l].data(), sizeof(double) * opt->mW[l].size());
            w.bytes(opt->vW[l].data(), sizeof(double) * opt->vW[l].size());
            w.bytes(opt->mb[l].data(), sizeof(double) * opt->mb[l].size());
            w.bytes(opt->vb[l].data(), sizeof(double) * opt->vb[l].size());
        }
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    BinReader r(path);
    r.magic(kCkptMagic);
    if (r.u32() != kFormatVersion) throw IoError("unsupported checkpoint version");
    std::vector<int> dims(r.u32());
    for (auto& d : dims) d = static_cast<int>(r.u32());
    const Activation act = activation_from_string(r.str());
    const std::uint64_t seed = r.u64();

    Checkpoint ck;
    ck.net = DenseNet::make(dims, act, seed);
    std::vector<double> flat(r.u64());
    r.bytes(flat.data(), sizeof(double) * flat.size());
    ck.net.unflatten_params(flat);

    if (r.u32()) {
        OptimizerState opt = OptimizerState::make(ck.net, 1.0);
        opt.step = r.u64();
        opt.learning_rate = r.f64();
        opt.beta1 = r.f64();
        opt.beta2 = r.f64();
        opt.eps_stab = r.f64();
        for (std::size_t l = 0; l < opt.mW.size(); ++l) {
            r.bytes(opt.mW[l].data(), sizeof(double) * opt.mW[l].size());
            r.bytes(opt.vW[l].data(), sizeof(double) * opt.vW[l].size());
            r.bytes(opt.mb[l].data(), sizeof(double) * opt.mb[l].size());
            r.bytes(opt.vb[l].data(), sizeof(double) * opt.vb[l].size());
        }
        ck.opt = std::move(opt);
    }
    return ck;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header, bool append)
    : path_(path) {
    if (append && file_exists(path)) return;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to " + path_);
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
}

std::string CsvWriter::format(double v) { return fmt_double(v); }
std::string CsvWriter::format(int v) { return std::to_string(v); }

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace hitgeo
