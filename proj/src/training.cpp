#include "flowlab/training.hpp"

#include <cmath>

namespace flowlab {

Stage parse_stage(const std::string& name) {
    if (name == "pretrain-dm") return Stage::pretrain_dm;
    if (name == "pretrain-fm") return Stage::pretrain_fm;
    if (name == "midtrain-cm") return Stage::midtrain_cm;
    if (name == "midtrain-mf") return Stage::midtrain_mf;
    if (name == "posttrain-ct") return Stage::posttrain_ct;
    if (name == "posttrain-cd") return Stage::posttrain_cd;
    if (name == "posttrain-gcd") return Stage::posttrain_gcd;
    if (name == "posttrain-mf") return Stage::posttrain_mf;
    throw ConfigError("unknown stage '" + name + "'");
}

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::pretrain_dm: return "pretrain-dm";
        case Stage::pretrain_fm: return "pretrain-fm";
        case Stage::midtrain_cm: return "midtrain-cm";
        case Stage::midtrain_mf: return "midtrain-mf";
        case Stage::posttrain_ct: return "posttrain-ct";
        case Stage::posttrain_cd: return "posttrain-cd";
        case Stage::posttrain_gcd: return "posttrain-gcd";
        case Stage::posttrain_mf: return "posttrain-mf";
    }
    return "?";
}

MlpArch TrainConfig::head_arch() const {
    MlpArch a = arch;
    a.input_dim = dataset.dim();
    a.output_dim = dataset.dim();
    a.time_inputs = (stage == Stage::midtrain_mf || stage == Stage::posttrain_mf) ? 2 : 1;
    return a;
}

DriftModel drift_from_denoiser(const DenoiserHead& head) {
    return DriftModel{[head](const Array& x, double t) {
                          return denoiser_to_velocity(head.sched, denoiser_eval(head, x, t), x, t);
                      },
                      DriftSource::teacher_denoiser};
}

DriftModel drift_from_velocity(const VelocityHead& head) {
    return DriftModel{[head](const Array& x, double t) { return velocity_eval(head, x, t); },
                      DriftSource::teacher_velocity};
}

DriftModel drift_from_avgdrift(const AvgDriftHead& head) {
    return DriftModel{[head](const Array& x, double t) { return avgdrift_eval(head, x, t, t); },
                      DriftSource::teacher_velocity};
}

std::function<Trajectory(const TimeGrid&, const Array&)> jump_sampler(const AvgDriftHead& head) {
    return [head](const TimeGrid& grid, const Array& anchor) {
        grid.validate();
        std::size_t M = grid.steps();
        Trajectory traj;
        traj.grid = grid;
        traj.states.assign(M + 1, Array());
        traj.states[M] = anchor;
        Array x = anchor;
        for (std::size_t k = 0; k + 1 <= M; ++k) {
            x = flowmap_from_drift(head, x, grid.values[k], grid.values[k + 1]);
            traj.states[M - 1 - k] = x;
        }
        traj.teacher_nfes = static_cast<long long>(M);
        return traj;
    };
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

Array conditional_velocity(const Schedule& sched, const Array& x0, const Array& eps, double t) {
    Array v = sched.alpha_prime(t) * x0;
    axpy(sched.sigma_prime(t), eps, v);
    return v;
}

}  // namespace

GradGraph::Node node_pretrain_dm(GradGraph& g, const Schedule& sched, double sigma_data,
                                 const std::vector<PerturbSample>& batch) {
    if (batch.empty()) throw DomainError("empty batch");
    std::vector<GradGraph::Node> terms;
    terms.reserve(batch.size());
    for (const PerturbSample& s : batch) {
        Array x_t = perturb(sched, s.x0, s.eps, s.t);
        GradGraph::Node d = precond_node(g, sigma_data, x_t, s.t);
        terms.push_back(g.sum_sq(g.sub(d, g.constant(s.x0))));
    }
    return g.mean(terms);
}

GradGraph::Node node_pretrain_fm(GradGraph& g, const Schedule& sched,
                                 const std::vector<PerturbSample>& batch) {
    if (batch.empty()) throw DomainError("empty batch");
    std::vector<GradGraph::Node> terms;
    terms.reserve(batch.size());
    for (const PerturbSample& s : batch) {
        Array x_t = perturb(sched, s.x0, s.eps, s.t);
        GradGraph::Node v = velocity_node(g, x_t, s.t);
        terms.push_back(
            g.sum_sq(g.sub(v, g.constant(conditional_velocity(sched, s.x0, s.eps, s.t)))));
    }
    return g.mean(terms);
}

GradGraph::Node node_cmt_cm(GradGraph& g, double sigma_data, const Trajectory& traj,
                            const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DomainError("empty index set");
    std::size_t M = traj.steps();
    std::vector<GradGraph::Node> terms;
    terms.reserve(indices.size());
    const Array& clean = traj.states[0];
    for (std::size_t i : indices) {
        if (i < 1 || i > M) throw DomainError("trajectory index out of range");
        GradGraph::Node f = precond_node(g, sigma_data, traj.states[i], traj.grid.time_at(i));
        terms.push_back(g.sum_sq(g.sub(f, g.constant(clean))));
    }
    return g.mean(terms);
}

GradGraph::Node node_cmt_mf(GradGraph& g, const Trajectory& traj,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    if (pairs.empty()) throw DomainError("empty pair set");
    std::size_t M = traj.steps();
    std::vector<GradGraph::Node> terms;
    terms.reserve(pairs.size());
    for (auto [i, j] : pairs) {
        if (i <= j) throw DomainError("pair needs i > j");
        if (i > M) throw DomainError("trajectory index out of range");
        double ti = traj.grid.time_at(i), tj = traj.grid.time_at(j);
        Array target = (1.0 / (ti - tj)) * (traj.states[i] - traj.states[j]);
        GradGraph::Node h = avgdrift_node(g, traj.states[i], ti, tj);
        terms.push_back(g.sum_sq(g.sub(h, g.constant(target))));
    }
    return g.mean(terms);
}

GradGraph::Node node_ct(GradGraph& g, const ConsistencyHead& frozen, const Schedule& sched,
                        double sigma_data, const std::vector<PerturbSample>& batch,
                        double delta_t) {
    if (batch.empty()) throw DomainError("empty batch");
    if (!(delta_t > 0.0)) throw DomainError("delta_t must be positive");
    std::vector<GradGraph::Node> terms;
    terms.reserve(batch.size());
    for (const PerturbSample& s : batch) {
        double t_prev = s.t - delta_t;
        if (t_prev < sched.terminal_time() - 1e-12)
            throw DomainError("t - delta_t below the schedule range");
        Array x_t = perturb(sched, s.x0, s.eps, s.t);
        Array x_prev = perturb(sched, s.x0, s.eps, t_prev);
        Array target = consistency_eval(frozen, x_prev, t_prev);
        GradGraph::Node f = precond_node(g, sigma_data, x_t, s.t);
        terms.push_back(g.sum_sq(g.sub(f, g.constant(target))));
    }
    return g.mean(terms);
}

GradGraph::Node node_cd(GradGraph& g, const ConsistencyHead& frozen, const DriftModel& teacher,
                        const Schedule& sched, double sigma_data,
                        const std::vector<PerturbSample>& batch, double delta_t,
                        SolveMethod method) {
    if (batch.empty()) throw DomainError("empty batch");
    if (!(delta_t > 0.0)) throw DomainError("delta_t must be positive");
    std::vector<GradGraph::Node> terms;
    terms.reserve(batch.size());
    for (const PerturbSample& s : batch) {
        double t_prev = s.t - delta_t;
        if (t_prev < sched.terminal_time() - 1e-12)
            throw DomainError("t - delta_t below the schedule range");
        Array x_t = perturb(sched, s.x0, s.eps, s.t);
        Array x_prev = method == SolveMethod::heun ? heun_step(teacher, x_t, s.t, t_prev)
                                                   : euler_step(teacher, x_t, s.t, t_prev);
        Array target = consistency_eval(frozen, x_prev, t_prev);
        GradGraph::Node f = precond_node(g, sigma_data, x_t, s.t);
        terms.push_back(g.sum_sq(g.sub(f, g.constant(target))));
    }
    return g.mean(terms);
}

GradGraph::Node node_gcd(GradGraph& g, const ConsistencyHead& frozen, const DriftModel& teacher,
                         const Schedule& sched, double sigma_data,
                         const std::vector<PerturbSample>& batch, double u, std::size_t substeps) {
    if (batch.empty()) throw DomainError("empty batch");
    if (u < sched.terminal_time() - 1e-12) throw DomainError("anchor u below the schedule range");
    std::vector<GradGraph::Node> terms;
    terms.reserve(batch.size());
    for (const PerturbSample& s : batch) {
        if (s.t < u - 1e-12) throw DomainError("gCD needs t >= u");
        Array x_t = perturb(sched, s.x0, s.eps, s.t);
        Array x_u = x_t;
        if (s.t > u) {
            std::size_t n = std::max<std::size_t>(1, substeps);
            for (std::size_t k = 0; k < n; ++k) {
                double a = s.t + (u - s.t) * static_cast<double>(k) / static_cast<double>(n);
                double b = s.t + (u - s.t) * static_cast<double>(k + 1) / static_cast<double>(n);
                if (k + 1 == n) b = u;
                x_u = euler_step(teacher, x_u, a, b);
            }
        }
        Array target = consistency_eval(frozen, x_u, u);
        GradGraph::Node f = precond_node(g, sigma_data, x_t, s.t);
        terms.push_back(g.sum_sq(g.sub(f, g.constant(target))));
    }
    return g.mean(terms);
}

Array mf_target(const AvgDriftHead& frozen, const Array& v_val, const Array& x, double t,
                double s) {
    if (t < s) throw DomainError("mf target needs t >= s");
    auto [h_val, dh] = mlp_jvp(frozen.params, x, {t, s}, v_val, {1.0, 0.0});
    (void)h_val;
    Array target = v_val;
    axpy(-(t - s), dh, target);
    return target;
}

GradGraph::Node node_mf(GradGraph& g, const AvgDriftHead& frozen, const Schedule& sched,
                        const std::vector<MfSample>& batch, MfVelocitySource v_source,
                        const DriftModel* teacher) {
    if (batch.empty()) throw DomainError("empty batch");
    if (v_source == MfVelocitySource::teacher && teacher == nullptr)
        throw DomainError("teacher velocity source requires a teacher");
    std::vector<GradGraph::Node> terms;
    terms.reserve(batch.size());
    for (const MfSample& s : batch) {
        if (s.t < s.s) throw DomainError("MF pair needs t >= s");
        Array x_t = perturb(sched, s.x0, s.eps, s.t);
        Array v = v_source == MfVelocitySource::teacher
                      ? (*teacher)(x_t, s.t)
                      : conditional_velocity(sched, s.x0, s.eps, s.t);
        Array target = mf_target(frozen, v, x_t, s.t, s.s);
        GradGraph::Node h = avgdrift_node(g, x_t, s.t, s.s);
        terms.push_back(g.sum_sq(g.sub(h, g.constant(target))));
    }
    return g.mean(terms);
}

std::vector<std::pair<std::size_t, std::size_t>> default_mf_pairs(std::size_t M) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 2; i <= M; ++i)
        for (std::size_t j = 0; j + 1 < i; ++j) pairs.emplace_back(i, j);
    if (pairs.empty() && M >= 1) pairs.emplace_back(M, 0);  // M == 1: keep the single full jump
    return pairs;
}

namespace {

double value_of(const NetParams& params, const LossBuilder& build) {
    GradGraph g(params);
    return g.scalar_value(build(g));
}

}  // namespace

double loss_pretrain_dm(const DenoiserHead& head, const std::vector<PerturbSample>& batch) {
    return value_of(head.params, [&](GradGraph& g) {
        return node_pretrain_dm(g, head.sched, head.sigma_data, batch);
    });
}

double loss_pretrain_fm(const VelocityHead& head, const std::vector<PerturbSample>& batch) {
    return value_of(head.params,
                    [&](GradGraph& g) { return node_pretrain_fm(g, head.sched, batch); });
}

double loss_cmt_cm(const ConsistencyHead& head, const Trajectory& traj,
                   const std::vector<std::size_t>& indices) {
    return value_of(head.params,
                    [&](GradGraph& g) { return node_cmt_cm(g, head.sigma_data, traj, indices); });
}

double loss_cmt_mf(const AvgDriftHead& head, const Trajectory& traj,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    return value_of(head.params, [&](GradGraph& g) { return node_cmt_mf(g, traj, pairs); });
}

double loss_ct(const ConsistencyHead& head, const ConsistencyHead& frozen,
               const std::vector<PerturbSample>& batch, double delta_t) {
    return value_of(head.params, [&](GradGraph& g) {
        return node_ct(g, frozen, head.sched, head.sigma_data, batch, delta_t);
    });
}

double loss_cd(const ConsistencyHead& head, const ConsistencyHead& frozen,
               const DriftModel& teacher, const std::vector<PerturbSample>& batch, double delta_t,
               SolveMethod method) {
    return value_of(head.params, [&](GradGraph& g) {
        return node_cd(g, frozen, teacher, head.sched, head.sigma_data, batch, delta_t, method);
    });
}

double loss_gcd(const ConsistencyHead& head, const ConsistencyHead& frozen,
                const DriftModel& teacher, const std::vector<PerturbSample>& batch, double u,
                std::size_t substeps) {
    return value_of(head.params, [&](GradGraph& g) {
        return node_gcd(g, frozen, teacher, head.sched, head.sigma_data, batch, u, substeps);
    });
}

double loss_mf(const AvgDriftHead& head, const AvgDriftHead& frozen,
               const std::vector<MfSample>& batch, MfVelocitySource v_source,
               const DriftModel* teacher) {
    return value_of(head.params, [&](GradGraph& g) {
        return node_mf(g, frozen, head.sched, batch, v_source, teacher);
    });
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

namespace {

double sample_time(TimeSampling mode, double lo, double hi, RngState& rng) {
    if (mode == TimeSampling::log_uniform) {
        if (!(lo > 0.0)) throw DomainError("log-uniform time sampling needs lo > 0");
        return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.next_uniform());
    }
    return lo + (hi - lo) * rng.next_uniform();
}

std::vector<PerturbSample> perturb_batch(const TrainConfig& cfg, double t_lo, double t_hi,
                                         RngState& rng) {
    std::vector<PerturbSample> batch(cfg.batch);
    for (PerturbSample& s : batch) {
        s.x0 = cfg.dataset.draw(rng);
        s.eps = gaussian(rng, cfg.dataset.dim());
        s.t = sample_time(cfg.time_sampling, t_lo, t_hi, rng);
    }
    return batch;
}

std::vector<MfSample> mf_batch(const TrainConfig& cfg, RngState& rng) {
    std::vector<MfSample> batch(cfg.batch);
    double lo = cfg.sched.terminal_time(), hi = cfg.sched.t_max;
    for (MfSample& s : batch) {
        s.x0 = cfg.dataset.draw(rng);
        s.eps = gaussian(rng, cfg.dataset.dim());
        if (rng.next_uniform() < cfg.mf_diag_mass) {
            s.t = s.s = lo + (hi - lo) * rng.next_uniform();
        } else {
            double a = lo + (hi - lo) * rng.next_uniform();
            double b = lo + (hi - lo) * rng.next_uniform();
            s.t = std::max(a, b);
            s.s = std::min(a, b);
        }
    }
    return batch;
}

}  // namespace

TrainResult train(const TrainConfig& config, const NetParams& init, const TeacherBundle& teacher,
                  const ReportHook& on_report) {
    MlpArch arch = config.head_arch();
    if (!(init.arch == arch))
        throw ConfigError("initial parameters do not match the stage head architecture");
    init.validate();

    const bool needs_teacher_drift =
        config.stage == Stage::posttrain_cd || config.stage == Stage::posttrain_gcd ||
        (config.stage == Stage::posttrain_mf && config.mf_velocity == MfVelocitySource::teacher);
    const bool is_midtrain =
        config.stage == Stage::midtrain_cm || config.stage == Stage::midtrain_mf;
    if (needs_teacher_drift && !teacher.drift)
        throw ConfigError("stage " + to_string(config.stage) + " requires a teacher drift");
    if (is_midtrain && !teacher.sampler && !teacher.drift)
        throw ConfigError("mid-training requires a teacher sampler or drift");

    auto run_teacher = [&](const TimeGrid& grid, const Array& anchor) {
        if (teacher.sampler) return teacher.sampler(grid, anchor);
        return solve(*teacher.drift, config.sched, grid, anchor, config.traj_method,
                     config.traj_warmup);
    };

    TrainResult result;
    result.params = init;
    OptimizerState opt =
        config.plain_sgd ? OptimizerState::sgd(arch.param_count(), config.lr)
                         : OptimizerState::adam(arch.param_count(), config.lr, config.beta1,
                                                config.beta2, config.eps_stab);

    RngState root(config.seed);
    RngState batch_rng = root.split("batch");
    RngState traj_rng = root.split("trajectory");

    TimeGrid grid;
    if (is_midtrain) grid = time_grid(config.sched, config.traj_M, config.traj_grid);

    double terminal = config.sched.terminal_time();
    double T = config.sched.t_max;

    for (std::size_t step = 1; step <= config.steps; ++step) {
        double loss_value = 0.0;
        Array grad;
        try {
            GradGraph g(result.params);
            GradGraph::Node loss_node{};
            switch (config.stage) {
                case Stage::pretrain_dm: {
                    auto batch = perturb_batch(config, terminal, T, batch_rng);
                    loss_node = node_pretrain_dm(g, config.sched, config.sigma_data, batch);
                    break;
                }
                case Stage::pretrain_fm: {
                    auto batch = perturb_batch(config, terminal, T, batch_rng);
                    loss_node = node_pretrain_fm(g, config.sched, batch);
                    break;
                }
                case Stage::midtrain_cm: {
                    std::vector<GradGraph::Node> terms;
                    std::vector<std::size_t> indices(config.traj_M);
                    for (std::size_t i = 0; i < config.traj_M; ++i) indices[i] = i + 1;
                    for (std::size_t a = 0; a < config.traj_anchors; ++a) {
                        Array anchor = sample_prior(config.dataset, config.sched, traj_rng);
                        Trajectory traj = run_teacher(grid, anchor);
                        result.teacher_nfes += traj.teacher_nfes;
                        terms.push_back(node_cmt_cm(g, config.sigma_data, traj, indices));
                    }
                    loss_node = g.mean(terms);
                    break;
                }
                case Stage::midtrain_mf: {
                    std::vector<GradGraph::Node> terms;
                    auto pairs = default_mf_pairs(config.traj_M);
                    for (std::size_t a = 0; a < config.traj_anchors; ++a) {
                        Array anchor = sample_prior(config.dataset, config.sched, traj_rng);
                        Trajectory traj = run_teacher(grid, anchor);
                        result.teacher_nfes += traj.teacher_nfes;
                        terms.push_back(node_cmt_mf(g, traj, pairs));
                    }
                    loss_node = g.mean(terms);
                    break;
                }
                case Stage::posttrain_ct: {
                    auto batch = perturb_batch(config, terminal + config.delta_t, T, batch_rng);
                    ConsistencyHead frozen{result.params, config.sched, config.sigma_data};
                    loss_node =
                        node_ct(g, frozen, config.sched, config.sigma_data, batch, config.delta_t);
                    break;
                }
                case Stage::posttrain_cd: {
                    auto batch = perturb_batch(config, terminal + config.delta_t, T, batch_rng);
                    ConsistencyHead frozen{result.params, config.sched, config.sigma_data};
                    loss_node = node_cd(g, frozen, *teacher.drift, config.sched, config.sigma_data,
                                        batch, config.delta_t, config.cd_method);
                    result.teacher_nfes += static_cast<long long>(batch.size()) *
                                           (config.cd_method == SolveMethod::heun ? 2 : 1);
                    break;
                }
                case Stage::posttrain_gcd: {
                    double u = std::max(config.gcd_u, terminal);
                    auto batch = perturb_batch(config, u, T, batch_rng);
                    ConsistencyHead frozen{result.params, config.sched, config.sigma_data};
                    loss_node = node_gcd(g, frozen, *teacher.drift, config.sched,
                                         config.sigma_data, batch, u, config.gcd_substeps);
                    result.teacher_nfes += static_cast<long long>(
                        batch.size() * std::max<std::size_t>(1, config.gcd_substeps));
                    break;
                }
                case Stage::posttrain_mf: {
                    auto batch = mf_batch(config, batch_rng);
                    AvgDriftHead frozen{result.params, config.sched};
                    loss_node = node_mf(g, frozen, config.sched, batch, config.mf_velocity,
                                        teacher.drift ? &*teacher.drift : nullptr);
                    if (config.mf_velocity == MfVelocitySource::teacher)
                        result.teacher_nfes += static_cast<long long>(batch.size());
                    break;
                }
            }
            loss_value = g.scalar_value(loss_node);
            grad = g.gradient(loss_node);
        } catch (const NumericError& err) {
            result.aborted = true;
            result.abort_step = static_cast<long long>(step);
            result.abort_reason = err.what();
            return result;
        }

        if (config.lr_linear_decay)
            opt.lr = config.lr *
                     (1.0 - static_cast<double>(step - 1) / static_cast<double>(config.steps));
        auto [next_params, next_opt] = optimizer_step(result.params, grad, opt);
        result.params = std::move(next_params);
        opt = std::move(next_opt);

        if (step % config.report_every == 0 || step == config.steps) {
            LossReport rep;
            rep.step = static_cast<long long>(step);
            rep.loss = loss_value;
            rep.aux["grad_norm"] = norm(grad);
            if (on_report) on_report(rep, result.params);
            result.reports.push_back(std::move(rep));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

std::vector<Array> sample_cm(const ConsistencyHead& head, std::size_t n_steps, std::size_t count,
                             RngState& rng) {
    if (n_steps < 1) throw DomainError("sampling needs n_steps >= 1");
    const Schedule& sched = head.sched;
    double T = sched.t_max;
    // geometric sigma ladder: two steps re-noise to the geometric mean of
    // (t_min, T); FM heads fall back to a linear ladder (sigma(0) = 0)
    double t_lo = sched.kind == ScheduleKind::edm ? sched.t_min : T / 64.0;
    std::vector<double> times(n_steps);
    for (std::size_t j = 0; j < n_steps; ++j) {
        double frac = static_cast<double>(j) / static_cast<double>(n_steps);
        times[j] = sched.kind == ScheduleKind::edm ? T * std::pow(t_lo / T, frac)
                                                   : T * (1.0 - frac);
    }
    std::size_t dim = head.params.arch.input_dim;
    std::vector<Array> out;
    out.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        Array x = gaussian(rng, dim);
        for (double& v : x.data) v *= sched.sigma(T);
        Array y;
        for (std::size_t j = 0; j < n_steps; ++j) {
            y = consistency_eval(head, x, times[j]);
            if (j + 1 < n_steps) {
                Array eps = gaussian(rng, dim);
                x = perturb(sched, y, eps, times[j + 1]);
            }
        }
        out.push_back(std::move(y));
    }
    return out;
}

std::vector<Array> sample_mf(const AvgDriftHead& head, std::size_t n_steps, std::size_t count,
                             RngState& rng) {
    if (n_steps < 1) throw DomainError("sampling needs n_steps >= 1");
    const Schedule& sched = head.sched;
    double T = sched.t_max, lo = sched.terminal_time();
    std::size_t dim = head.params.arch.input_dim;
    std::vector<Array> out;
    out.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        Array x = gaussian(rng, dim);
        for (double& v : x.data) v *= sched.sigma(T);
        for (std::size_t j = 0; j < n_steps; ++j) {
            double t = T + (lo - T) * static_cast<double>(j) / static_cast<double>(n_steps);
            double s = T + (lo - T) * static_cast<double>(j + 1) / static_cast<double>(n_steps);
            if (j + 1 == n_steps) s = lo;
            x = flowmap_from_drift(head, x, t, s);
        }
        out.push_back(std::move(x));
    }
    return out;
}

}  // namespace flowlab
