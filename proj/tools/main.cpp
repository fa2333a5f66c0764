// flowlab: desk-scale flow-map training pipeline
//
//   flowlab <command> [--config PATH] [--set key=value]... [--out DIR] [--seed N]
//
// commands: pretrain, midtrain, posttrain, sample, trajectories, diagnose,
// nfe-table. Exit codes: 0 ok, 2 numerical abort, 3 missing input, 4 config
// error.

#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "flowlab/diagnostics.hpp"
#include "flowlab/io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace flowlab;

namespace {

constexpr const char* kVersion = "flowlab 0.1.0";

struct CliArgs {
    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
};

CliArgs parse_cli(int argc, char** argv) {
    if (argc < 2)
        throw ConfigError(
            "usage: flowlab <command> [--config PATH] [--set k=v] [--out DIR] [--seed N]");
    CliArgs args;
    args.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string flag = argv[i];
        auto need_value = [&](const char* name) -> std::string {
            if (i + 1 >= argc) throw ConfigError(std::string(name) + " needs a value");
            return argv[++i];
        };
        if (flag == "--config")
            args.config_path = need_value("--config");
        else if (flag == "--set")
            args.overrides.push_back(need_value("--set"));
        else if (flag == "--out")
            args.out_dir = need_value("--out");
        else if (flag == "--seed")
            args.overrides.push_back("seed=" + need_value("--seed"));
        else
            throw ConfigError("unknown flag '" + flag + "'");
    }
    return args;
}

ConfigMap resolve_config(const CliArgs& args) {
    ConfigMap config;
    if (!args.config_path.empty()) {
        if (!fs::exists(args.config_path))
            throw IoError("config file not found: " + args.config_path);
        config = parse_config_file(args.config_path);
    }
    for (const std::string& kv : args.overrides) apply_override(config, kv);
    return config;
}

// Every run writes exactly one manifest listing its artifacts with hashes.
struct RunOutput {
    fs::path dir;
    std::vector<fs::path> files;

    fs::path path(const std::string& name) const { return dir / name; }
    void add(const fs::path& p) { files.push_back(p); }
};

void write_manifest(const RunOutput& out, const std::string& command, const ConfigMap& config) {
    json manifest;
    manifest["version"] = kVersion;
    manifest["command"] = command;
    std::string rendered = render_config(config);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : command + "\n" + rendered) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char idbuf[18];
    std::snprintf(idbuf, sizeof(idbuf), "r%016llx", static_cast<unsigned long long>(h));
    manifest["run_id"] = idbuf;  // content-derived: reruns stay byte-identical
    manifest["seed"] = config_get_int(config, "seed", 0);
    json cfg = json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    manifest["config"] = cfg;
    json files = json::array();
    for (const fs::path& p : out.files) {
        json f;
        f["path"] = p.filename().string();
        f["hash"] = file_hash_hex(p.string());
        files.push_back(f);
    }
    manifest["files"] = files;
    write_text_file((out.dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ------------------------- teacher / init plumbing --------------------------

struct LoadedModel {
    CheckpointMeta meta;
    NetParams params;
};

LoadedModel load_model(const std::string& path) {
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
    auto [meta, params] = load_checkpoint(path);
    return {meta, std::move(params)};
}

bool is_mf_stage(const std::string& stage) {
    return stage == "midtrain-mf" || stage == "posttrain-mf";
}

TeacherBundle make_teacher(const ConfigMap& config, const TrainConfig& cfg) {
    TeacherBundle teacher;
    if (config_get_bool(config, "teacher.analytic", false)) {
        if (!cfg.dataset.has_oracle())
            throw ConfigError("teacher.analytic needs a dataset with an analytic oracle");
        teacher.drift = analytic_drift(cfg.dataset.gmm, cfg.sched);
        return teacher;
    }
    std::string path = config_get(config, "teacher.checkpoint", "");
    if (path.empty()) return teacher;
    LoadedModel model = load_model(path);
    if (model.meta.stage == "pretrain-dm") {
        DenoiserHead head{model.params, model.meta.sched, model.meta.sigma_data};
        teacher.drift = drift_from_denoiser(head);
    } else if (model.meta.stage == "pretrain-fm") {
        VelocityHead head{model.params, model.meta.sched};
        teacher.drift = drift_from_velocity(head);
    } else if (is_mf_stage(model.meta.stage)) {
        AvgDriftHead head{model.params, model.meta.sched};
        teacher.drift = drift_from_avgdrift(head);
        if (config_get(config, "teacher.sampler", "jump") == "jump")
            teacher.sampler = jump_sampler(head);
    } else {
        throw ConfigError("checkpoint stage '" + model.meta.stage + "' cannot serve as a teacher");
    }
    return teacher;
}

NetParams make_init(const ConfigMap& config, const TrainConfig& cfg) {
    std::string path = config_get(config, "init.checkpoint", "");
    if (path.empty()) {
        RngState rng = RngState(cfg.seed).split("init");
        return init_params(cfg.head_arch(), rng);
    }
    LoadedModel model = load_model(path);
    if (!(model.params.arch == cfg.head_arch()))
        throw ConfigError("init checkpoint architecture does not match the stage head");
    return std::move(model.params);
}

// ------------------------------- commands -----------------------------------

int cmd_train(const std::string& command, const ConfigMap& raw, const CliArgs& args) {
    ConfigMap config = raw;
    if (!config.count("stage")) {
        if (command == "pretrain") config["stage"] = "pretrain-dm";
        if (command == "midtrain") config["stage"] = "midtrain-cm";
        if (command == "posttrain") config["stage"] = "posttrain-ct";
    }
    TrainConfig cfg = train_config_from(config);
    std::string stage = to_string(cfg.stage);
    if (stage.rfind(command, 0) != 0)
        throw ConfigError("stage '" + stage + "' does not belong to command '" + command + "'");

    TeacherBundle teacher = make_teacher(config, cfg);
    NetParams init = make_init(config, cfg);

    TrainResult result = train(cfg, init, teacher);

    RunOutput out{fs::path(args.out_dir), {}};
    fs::create_directories(out.dir);
    CheckpointMeta meta{stage, result.params.arch, cfg.sched, cfg.sigma_data, cfg.seed,
                        static_cast<long long>(cfg.steps)};
    save_checkpoint(out.path("checkpoint.ckpt").string(), meta, result.params);
    out.add(out.path("checkpoint.ckpt"));
    write_loss_csv(out.path("loss.csv").string(), result.reports);
    out.add(out.path("loss.csv"));
    write_manifest(out, command, config);

    if (result.aborted) {
        std::cerr << "numerical abort at step " << result.abort_step << ": "
                  << result.abort_reason << "\n";
        return 2;
    }
    std::cout << stage << " done: " << cfg.steps << " steps";
    if (!result.reports.empty()) std::cout << ", final loss " << result.reports.back().loss;
    if (result.teacher_nfes > 0) std::cout << ", teacher NFEs " << result.teacher_nfes;
    std::cout << "\n";
    return 0;
}

int cmd_sample(const ConfigMap& config, const CliArgs& args) {
    std::string path = config_get(config, "sample.checkpoint", "");
    if (path.empty()) throw ConfigError("sample needs sample.checkpoint");
    LoadedModel model = load_model(path);
    std::size_t n = static_cast<std::size_t>(config_get_int(config, "sample.n", 4096));
    std::size_t steps = static_cast<std::size_t>(config_get_int(config, "sample.steps", 1));
    std::uint64_t seed = static_cast<std::uint64_t>(config_get_int(config, "seed", 0));
    RngState rng = RngState(seed).split("sample");

    std::vector<Array> samples;
    std::size_t dim = model.params.arch.input_dim;
    if (n > 0) {
        if (is_mf_stage(model.meta.stage)) {
            AvgDriftHead head{model.params, model.meta.sched};
            samples = sample_mf(head, steps, n, rng);
        } else {
            ConsistencyHead head{model.params, model.meta.sched, model.meta.sigma_data};
            samples = sample_cm(head, steps, n, rng);
        }
    }

    RunOutput out{fs::path(args.out_dir), {}};
    fs::create_directories(out.dir);
    write_samples_csv(out.path("samples.csv").string(), samples, dim);
    out.add(out.path("samples.csv"));

    json metrics;
    if (samples.empty()) {
        metrics = nullptr;
    } else {
        Dataset data = dataset_from_config(config);
        RngState data_rng = RngState(seed).split("metric-data");
        std::vector<Array> fresh;
        fresh.reserve(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) fresh.push_back(data.draw(data_rng));
        if (dim == 1) {
            Array a(samples.size()), b(fresh.size());
            for (std::size_t i = 0; i < samples.size(); ++i) a.data[i] = samples[i].data[0];
            for (std::size_t i = 0; i < fresh.size(); ++i) b.data[i] = fresh[i].data[0];
            metrics["wasserstein_1d"] = wasserstein_1d(a, b);
        } else {
            RngState dir_rng = RngState(seed).split("metric-dirs");
            std::size_t n_dirs =
                static_cast<std::size_t>(config_get_int(config, "sample.n_dirs", 64));
            metrics["sliced_w2"] = sliced_w2(samples, fresh, n_dirs, dir_rng);
        }
        metrics["n_samples"] = samples.size();
        metrics["n_steps"] = steps;
    }
    json doc;
    doc["metrics"] = metrics;
    write_text_file(out.path("metrics.json").string(), doc.dump(2) + "\n");
    out.add(out.path("metrics.json"));
    write_manifest(out, "sample", config);
    std::cout << "sample done: " << samples.size() << " samples\n";
    return 0;
}

int cmd_trajectories(const ConfigMap& config, const CliArgs& args) {
    TrainConfig cfg = train_config_from(config);
    TeacherBundle teacher = make_teacher(config, cfg);
    if (!teacher.drift && !teacher.sampler)
        throw ConfigError("trajectories needs teacher.checkpoint or teacher.analytic");
    std::size_t n_anchors = static_cast<std::size_t>(config_get_int(config, "traj.n_anchors", 4));
    TimeGrid grid = time_grid(cfg.sched, cfg.traj_M, cfg.traj_grid);
    bool reuse = config_get_bool(config, "traj.reuse", true);

    RngState rng = RngState(cfg.seed).split("trajectory");
    std::vector<Trajectory> trajectories;
    trajectories.reserve(n_anchors);
    for (std::size_t a = 0; a < n_anchors; ++a) {
        Array anchor = sample_prior(cfg.dataset, cfg.sched, rng);
        if (teacher.sampler)
            trajectories.push_back(teacher.sampler(grid, anchor));
        else if (reuse)
            trajectories.push_back(
                solve(*teacher.drift, cfg.sched, grid, anchor, cfg.traj_method, cfg.traj_warmup));
        else
            trajectories.push_back(
                solve(*teacher.drift, cfg.sched, grid, anchor, SolveMethod::heun));
    }

    RunOutput out{fs::path(args.out_dir), {}};
    fs::create_directories(out.dir);
    write_trajectories_csv(out.path("trajectories.csv").string(), trajectories);
    out.add(out.path("trajectories.csv"));
    write_manifest(out, "trajectories", config);
    std::cout << "trajectories done: " << n_anchors << " anchors, "
              << (trajectories.empty() ? 0 : trajectories.front().states.size())
              << " states each\n";
    return 0;
}

json nfe_table_json() {
    json rows = json::array();
    for (std::size_t k : {2, 3}) {
        for (std::size_t s : {1, 2}) {
            Rational r = nfe_per_pair(16, k, s, NfeScheme::cmt);
            json row;
            row["M"] = 16;
            row["k"] = k;
            row["s"] = s;
            row["scheme"] = "cmt";
            row["teacher_nfes_per_pair"] = r.value();
            row["exact"] = std::to_string(r.num) + "/" + std::to_string(r.den);
            rows.push_back(row);
        }
    }
    for (std::size_t q : {1, 2}) {
        json row;
        row["scheme"] = "cd";
        row["q"] = q;
        row["teacher_nfes_per_pair"] = nfe_per_pair(16, 1, q, NfeScheme::cd).value();
        rows.push_back(row);
    }
    json ct;
    ct["scheme"] = "ct";
    ct["teacher_nfes_per_pair"] = 0.0;
    rows.push_back(ct);
    return rows;
}

int cmd_nfe_table(const ConfigMap& config, const CliArgs& args) {
    json rows = nfe_table_json();
    std::cout << "teacher NFEs per pair (M = 16)\n";
    for (const auto& row : rows) {
        std::cout << "  " << row["scheme"].get<std::string>();
        if (row.contains("k")) std::cout << " k=" << row["k"] << " s=" << row["s"];
        if (row.contains("q")) std::cout << " q=" << row["q"];
        std::cout << ": " << row["teacher_nfes_per_pair"];
        if (row.contains("exact")) std::cout << " (" << row["exact"].get<std::string>() << ")";
        std::cout << "\n";
    }
    if (!args.out_dir.empty()) {
        RunOutput out{fs::path(args.out_dir), {}};
        fs::create_directories(out.dir);
        json doc;
        doc["nfe_per_pair"] = rows;
        write_text_file(out.path("nfe_table.json").string(), doc.dump(2) + "\n");
        out.add(out.path("nfe_table.json"));
        write_manifest(out, "nfe-table", config);
    }
    return 0;
}

int cmd_diagnose(const ConfigMap& config, const CliArgs& args) {
    std::string task = config_get(config, "diag.task", "inits");
    if (task == "nfe-table") return cmd_nfe_table(config, args);
    if (task != "inits") throw ConfigError("diag.task must be inits or nfe-table");

    TrainConfig post = train_config_from(config);
    if (post.stage != Stage::posttrain_ct)
        throw ConfigError("diagnose runs CM post-training; set stage = posttrain-ct");
    if (!post.dataset.has_oracle())
        throw ConfigError("diagnose needs an analytic (GMM) dataset");

    std::string scheme_list = config_get(config, "diag.schemes", "cmt,dm,gcd,random");
    std::vector<InitScheme> schemes;
    std::stringstream ss(scheme_list);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        InitScheme scheme;
        scheme.name = name;
        if (name == "random") {
            RngState rng = RngState(post.seed).split("random-init");
            scheme.params = init_params(post.head_arch(), rng);
            RngState spread = RngState(post.seed).split("random-init-spread");
            for (double& v : scheme.params.values.data) v += 0.5 * spread.next_gaussian();
        } else {
            std::string path = config_get(config, "diag.init." + name, "");
            if (path.empty())
                throw ConfigError("diag.init." + name + " checkpoint path is required");
            LoadedModel model = load_model(path);
            if (!(model.params.arch == post.head_arch()))
                throw ConfigError("scheme '" + name + "' checkpoint does not match the head");
            scheme.params = std::move(model.params);
        }
        schemes.push_back(std::move(scheme));
    }
    if (schemes.empty()) throw ConfigError("diag.schemes is empty");

    std::size_t stats_n =
        static_cast<std::size_t>(config_get_int(config, "diag.stats_samples", 2000));
    std::size_t eval_n =
        static_cast<std::size_t>(config_get_int(config, "diag.eval_samples", 2000));
    std::size_t ref_steps =
        static_cast<std::size_t>(config_get_int(config, "diag.ref_steps", 512));
    ReferenceFlow ref = ReferenceFlow::for_gmm(post.dataset.gmm, post.sched, ref_steps);

    auto results = compare_inits(schemes, post, ref, stats_n, eval_n,
                                 static_cast<std::uint64_t>(config_get_int(config, "seed", 0)) + 1);

    RunOutput out{fs::path(args.out_dir), {}};
    fs::create_directories(out.dir);
    json report;
    report["note"] =
        "single-Gaussian testbeds make the flow map a rescaled posterior mean; "
        "use a 2-component mixture before reading the cmt-vs-dm gap as strict";
    json stats = json::array();
    for (const InitComparison& cmp : results) {
        json s;
        s["scheme"] = cmp.scheme;
        s["bias_sq"] = cmp.stats.bias_sq;
        s["stderr_bias"] = cmp.stats.stderr_bias;
        s["variance"] = cmp.stats.variance;
        s["stderr_var"] = cmp.stats.stderr_var;
        s["mse"] = cmp.stats.mse;
        s["stderr_mse"] = cmp.stats.stderr_mse;
        s["n_samples"] = cmp.stats.n_samples;
        s["diverged"] = cmp.diverged;
        if (cmp.diverged) s["diverged_step"] = cmp.diverged_step;
        stats.push_back(s);

        write_curve_csv(out.path("curve_" + cmp.scheme + ".csv").string(), "oracle_loss",
                        cmp.post_train_curve);
        out.add(out.path("curve_" + cmp.scheme + ".csv"));
    }
    report["grad_stats"] = stats;
    report["nfe_per_pair"] = nfe_table_json();
    write_text_file(out.path("gradstats.json").string(), report.dump(2) + "\n");
    out.add(out.path("gradstats.json"));
    write_manifest(out, "diagnose", config);

    for (const InitComparison& cmp : results)
        std::cout << cmp.scheme << ": B=" << cmp.stats.bias_sq << " V=" << cmp.stats.variance
                  << " E=" << cmp.stats.mse << (cmp.diverged ? " (diverged)" : "") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        CliArgs args = parse_cli(argc, argv);
        ConfigMap config = resolve_config(args);
        if (args.command == "pretrain" || args.command == "midtrain" ||
            args.command == "posttrain")
            return cmd_train(args.command, config, args);
        if (args.command == "sample") return cmd_sample(config, args);
        if (args.command == "trajectories") return cmd_trajectories(config, args);
        if (args.command == "diagnose") return cmd_diagnose(config, args);
        if (args.command == "nfe-table") return cmd_nfe_table(config, args);
        throw ConfigError("unknown command '" + args.command + "'");
    } catch (const NumericError& err) {
        std::cerr << err.what() << "\n";
        return 2;
    } catch (const IoError& err) {
        std::cerr << err.what() << "\n";
        return 3;
    } catch (const ConfigError& err) {
        std::cerr << err.what() << "\n";
        return 4;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 4;
    }
}
