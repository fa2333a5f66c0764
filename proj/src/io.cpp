#include "flowlab/io.hpp"

#include <bit>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint parameter blocks are little-endian");

namespace flowlab {

namespace {

// shortest representation that parses back to the same double
std::string format_real(double v) {
    char buf[40];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw IoError("cannot format real value");
    return std::string(buf, end);
}

std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "silu"; }

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "silu") return Activation::silu;
    throw ConfigError("unknown activation '" + s + "'");
}

std::string hidden_list(const std::vector<std::size_t>& widths) {
    std::string out;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(widths[i]);
    }
    return out;
}

std::vector<std::size_t> parse_hidden_list(const std::string& s) {
    std::vector<std::size_t> widths;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        widths.push_back(static_cast<std::size_t>(std::stoull(item)));
    }
    if (widths.empty()) throw ConfigError("empty hidden width list");
    return widths;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const NetParams& params) {
    params.validate();
    std::ostringstream head;
    head << "flowlab-checkpoint 1\n";
    head << "stage = " << meta.stage << "\n";
    head << "sched.kind = " << (meta.sched.kind == ScheduleKind::edm ? "edm" : "fm") << "\n";
    head << "sched.t_min = " << format_real(meta.sched.t_min) << "\n";
    head << "sched.t_max = " << format_real(meta.sched.t_max) << "\n";
    head << "sched.rho = " << format_real(meta.sched.rho) << "\n";
    head << "sigma_data = " << format_real(meta.sigma_data) << "\n";
    head << "seed = " << meta.seed << "\n";
    head << "step = " << meta.step << "\n";
    head << "arch.input_dim = " << params.arch.input_dim << "\n";
    head << "arch.time_inputs = " << params.arch.time_inputs << "\n";
    head << "arch.hidden = " << hidden_list(params.arch.hidden_widths) << "\n";
    head << "arch.output_dim = " << params.arch.output_dim << "\n";
    head << "arch.activation = " << activation_name(params.arch.activation) << "\n";
    head << "params = " << params.values.size() << "\n";
    head << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(reinterpret_cast<const char*>(params.values.data.data()),
              static_cast<std::streamsize>(params.values.size() * sizeof(double)));
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

std::pair<CheckpointMeta, NetParams> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line) != "flowlab-checkpoint 1")
        throw IoError("not a checkpoint file: '" + path + "'");
    ConfigMap fields;
    while (std::getline(in, line)) {
        if (trim(line).empty()) break;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed checkpoint header line: " + line);
        fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    CheckpointMeta meta;
    meta.stage = config_get(fields, "stage", "");
    std::string kind = config_get(fields, "sched.kind", "edm");
    if (kind == "edm")
        meta.sched = Schedule::edm(config_get_real(fields, "sched.t_min", 0.002),
                                   config_get_real(fields, "sched.t_max", 10.0),
                                   config_get_real(fields, "sched.rho", 7.0));
    else
        meta.sched = Schedule::fm(config_get_real(fields, "sched.t_max", 1.0));
    meta.sigma_data = config_get_real(fields, "sigma_data", 0.5);
    meta.seed = static_cast<std::uint64_t>(config_get_int(fields, "seed", 0));
    meta.step = config_get_int(fields, "step", 0);

    MlpArch arch;
    arch.input_dim = static_cast<std::size_t>(config_get_int(fields, "arch.input_dim", 1));
    arch.time_inputs = static_cast<std::size_t>(config_get_int(fields, "arch.time_inputs", 1));
    arch.hidden_widths = parse_hidden_list(config_get(fields, "arch.hidden", "128,128,128"));
    arch.output_dim = static_cast<std::size_t>(config_get_int(fields, "arch.output_dim", 1));
    arch.activation = parse_activation(config_get(fields, "arch.activation", "silu"));
    meta.arch = arch;

    std::size_t count = static_cast<std::size_t>(config_get_int(fields, "params", 0));
    if (count != arch.param_count())
        throw IoError("checkpoint parameter count does not match its architecture");
    NetParams params{arch, Array(count)};
    in.read(reinterpret_cast<char*>(params.values.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw IoError("truncated checkpoint parameter block");
    return {meta, std::move(params)};
}

void write_loss_csv(const std::string& path, const std::vector<LossReport>& reports) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "step,loss,grad_norm\n";
    for (const LossReport& r : reports) {
        double gn = r.aux.count("grad_norm") ? r.aux.at("grad_norm") : 0.0;
        out << r.step << "," << format_real(r.loss) << "," << format_real(gn) << "\n";
    }
}

void write_trajectories_csv(const std::string& path,
                            const std::vector<Trajectory>& trajectories) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    std::size_t dim = trajectories.empty() || trajectories.front().states.empty()
                          ? 0
                          : trajectories.front().states.front().size();
    out << "anchor,i,t";
    for (std::size_t d = 0; d < dim; ++d) out << ",x" << d;
    out << ",teacher_nfes\n";
    for (std::size_t a = 0; a < trajectories.size(); ++a) {
        const Trajectory& traj = trajectories[a];
        for (std::size_t i = 0; i < traj.states.size(); ++i) {
            out << a << "," << i << "," << format_real(traj.grid.time_at(i));
            for (std::size_t d = 0; d < traj.states[i].size(); ++d)
                out << "," << format_real(traj.states[i].data[d]);
            out << "," << traj.teacher_nfes << "\n";
        }
    }
}

void write_samples_csv(const std::string& path, const std::vector<Array>& samples,
                       std::size_t dim) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "sample";
    for (std::size_t d = 0; d < dim; ++d) out << ",x" << d;
    out << "\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out << i;
        for (std::size_t d = 0; d < samples[i].size(); ++d)
            out << "," << format_real(samples[i].data[d]);
        out << "\n";
    }
}

void write_curve_csv(const std::string& path, const std::string& value_name,
                     const std::vector<std::pair<long long, double>>& curve) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "step," << value_name << "\n";
    for (auto [step, v] : curve) out << step << "," << format_real(v) << "\n";
}

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config line: '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty config key in line: '" + t + "'");
        out[key] = value;
    }
    return out;
}

ConfigMap parse_config_file(const std::string& path) {
    return parse_config_text(read_text_file(path));
}

void apply_override(ConfigMap& config, const std::string& key_eq_value) {
    std::size_t eq = key_eq_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value, got '" + key_eq_value + "'");
    config[trim(key_eq_value.substr(0, eq))] = trim(key_eq_value.substr(eq + 1));
}

std::string render_config(const ConfigMap& config) {
    std::string out;
    for (const auto& [k, v] : config) out += k + " = " + v + "\n";
    return out;
}

std::string config_get(const ConfigMap& c, const std::string& key, const std::string& fallback) {
    auto it = c.find(key);
    return it == c.end() ? fallback : it->second;
}

double config_get_real(const ConfigMap& c, const std::string& key, double fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not a real number: '" + it->second + "'");
    }
}

long long config_get_int(const ConfigMap& c, const std::string& key, long long fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    try {
        std::size_t pos = 0;
        long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' is not an integer: '" + it->second + "'");
    }
}

bool config_get_bool(const ConfigMap& c, const std::string& key, bool fallback) {
    auto it = c.find(key);
    if (it == c.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key '" + key + "' is not a boolean: '" + it->second + "'");
}

Schedule schedule_from_config(const ConfigMap& c) {
    std::string kind = config_get(c, "sched.kind", "edm");
    if (kind == "edm")
        return Schedule::edm(config_get_real(c, "sched.t_min", 0.002),
                             config_get_real(c, "sched.t_max", 10.0),
                             config_get_real(c, "sched.rho", 7.0));
    if (kind == "fm") return Schedule::fm(config_get_real(c, "sched.t_max", 1.0));
    throw ConfigError("sched.kind must be edm or fm, got '" + kind + "'");
}

Dataset dataset_from_config(const ConfigMap& c) {
    std::string kind = config_get(c, "data.kind", "gaussian1d");
    if (kind == "gaussian1d")
        return Dataset::gaussian1d(config_get_real(c, "data.mean", 0.0),
                                   config_get_real(c, "data.variance", 1.0));
    if (kind == "gmm1d")
        return Dataset::gmm1d(config_get_real(c, "data.mu", 1.0),
                              config_get_real(c, "data.variance", 0.25));
    if (kind == "two-moons")
        return Dataset::two_moons(config_get_real(c, "data.noise", 0.05),
                                  config_get_real(c, "data.scale", 0.6));
    throw ConfigError("data.kind must be gaussian1d, gmm1d or two-moons, got '" + kind + "'");
}

MlpArch arch_from_config(const ConfigMap& c) {
    MlpArch arch;
    arch.hidden_widths = parse_hidden_list(config_get(c, "arch.hidden", "128,128,128"));
    arch.activation = parse_activation(config_get(c, "arch.activation", "silu"));
    return arch;  // input/output/time dims are set by the stage
}

TrainConfig train_config_from(const ConfigMap& c) {
    TrainConfig cfg;
    cfg.stage = parse_stage(config_get(c, "stage", "pretrain-dm"));
    cfg.dataset = dataset_from_config(c);
    cfg.sched = schedule_from_config(c);
    cfg.arch = arch_from_config(c);
    cfg.sigma_data = config_get_real(c, "model.sigma_data", 0.5);
    cfg.batch = static_cast<std::size_t>(config_get_int(c, "train.batch", 128));
    cfg.steps = static_cast<std::size_t>(config_get_int(c, "train.steps", 1000));
    cfg.lr = config_get_real(c, "train.lr", 1e-3);
    cfg.lr_linear_decay = config_get_bool(c, "train.lr_linear_decay", false);
    cfg.beta1 = config_get_real(c, "train.beta1", 0.9);
    cfg.beta2 = config_get_real(c, "train.beta2", 0.999);
    cfg.eps_stab = config_get_real(c, "train.eps_stab", 1e-8);
    cfg.plain_sgd = config_get_bool(c, "train.plain_sgd", false);
    cfg.delta_t = config_get_real(c, "train.delta_t", 1e-2);
    cfg.gcd_u = config_get_real(c, "train.gcd_u", 0.0);
    cfg.gcd_substeps = static_cast<std::size_t>(config_get_int(c, "train.gcd_substeps", 4));
    cfg.cd_method = parse_solve_method(config_get(c, "train.cd_method", "euler"));
    cfg.seed = static_cast<std::uint64_t>(config_get_int(c, "seed", 0));
    std::string ts = config_get(c, "train.time_sampling", "uniform");
    if (ts == "uniform")
        cfg.time_sampling = TimeSampling::uniform;
    else if (ts == "log-uniform")
        cfg.time_sampling = TimeSampling::log_uniform;
    else
        throw ConfigError("train.time_sampling must be uniform or log-uniform");
    std::string vs = config_get(c, "train.mf_velocity", "conditional");
    if (vs == "conditional")
        cfg.mf_velocity = MfVelocitySource::conditional;
    else if (vs == "teacher")
        cfg.mf_velocity = MfVelocitySource::teacher;
    else
        throw ConfigError("train.mf_velocity must be conditional or teacher");
    cfg.mf_diag_mass = config_get_real(c, "train.mf_diag_mass", 0.25);
    cfg.traj_M = static_cast<std::size_t>(config_get_int(c, "traj.M", 16));
    cfg.traj_method = parse_solve_method(config_get(c, "traj.method", "ms3"));
    cfg.traj_warmup = config_get(c, "traj.warmup", "escalate") == "heun" ? WarmupMode::heun
                                                                        : WarmupMode::escalate;
    std::string grid = config_get(c, "traj.grid", cfg.sched.kind == ScheduleKind::edm
                                                      ? "power"
                                                      : "uniform");
    if (grid == "power")
        cfg.traj_grid = GridKind::power;
    else if (grid == "uniform")
        cfg.traj_grid = GridKind::uniform;
    else
        throw ConfigError("traj.grid must be uniform or power");
    cfg.traj_anchors = static_cast<std::size_t>(config_get_int(c, "traj.anchors", 8));
    cfg.report_every = static_cast<std::size_t>(config_get_int(c, "train.report_every", 100));
    return cfg;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, h);
    return hex;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace flowlab
