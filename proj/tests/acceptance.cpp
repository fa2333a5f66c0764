// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Heavier pipeline criteria reuse the frozen recipes from
// the calibration runs; thresholds are pinned constants, never recomputed.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "flowlab/diagnostics.hpp"
#include "flowlab/io.hpp"

using namespace flowlab;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    bool pass;
    std::string detail;
    double seconds;
};

std::vector<Criterion> g_results;

template <typename Fn>
void run_criterion(int id, const std::string& name, Fn&& fn, int only) {
    if (only != 0 && only != id) return;
    auto t0 = std::chrono::steady_clock::now();
    Criterion c{id, false, "", 0.0};
    try {
        std::ostringstream detail;
        c.pass = fn(detail);
        c.detail = detail.str();
    } catch (const std::exception& err) {
        c.pass = false;
        c.detail = std::string("exception: ") + err.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    g_results.push_back(c);
    std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): "
              << c.detail << "  [" << c.seconds << " s]" << std::endl;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = xs.size();
    for (std::size_t i = 0; i < n; ++i) {
        double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

NetParams spread_params(const MlpArch& arch, std::uint64_t seed, double amp) {
    RngState rng(seed);
    NetParams p = init_params(arch, rng);
    RngState extra(seed + 1);
    for (double& v : p.values.data) v += amp * extra.next_gaussian();
    return p;
}

double closed_flow(double x, double t, double s) {
    return x * std::sqrt((1.0 + s * s) / (1.0 + t * t));
}

std::vector<Array> fresh_moons(std::size_t n, std::uint64_t seed) {
    Dataset data = Dataset::two_moons();
    RngState rng(seed);
    std::vector<Array> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(data.draw(rng));
    return out;
}

double moons_w2_cm(const ConsistencyHead& head, std::uint64_t seed) {
    RngState srng(seed);
    auto samples = sample_cm(head, 1, 2048, srng);
    auto fresh = fresh_moons(2048, seed + 1);
    RngState dirs(seed + 2);
    return sliced_w2(samples, fresh, 64, dirs);
}

double moons_w2_mf(const AvgDriftHead& head, std::size_t steps, std::uint64_t seed) {
    RngState srng(seed);
    auto samples = sample_mf(head, steps, 2048, srng);
    auto fresh = fresh_moons(2048, seed + 1);
    RngState dirs(seed + 2);
    return sliced_w2(samples, fresh, 64, dirs);
}

// ---------------------------------------------------------------------------
// criterion 1: gradient / JVP correctness against central finite differences
// ---------------------------------------------------------------------------
bool criterion_gradients(std::ostringstream& detail) {
    RngState meta(20240901);
    double worst_grad = 0.0, worst_jvp = 0.0;
    for (int cfg = 0; cfg < 50; ++cfg) {
        MlpArch arch;
        arch.input_dim = 1 + meta.next_u64() % 3;
        arch.time_inputs = 1 + meta.next_u64() % 2;
        std::size_t depth = 1 + meta.next_u64() % 3;
        arch.hidden_widths.assign(depth, 4 + meta.next_u64() % 9);
        arch.output_dim = 1 + meta.next_u64() % 3;
        arch.activation = (meta.next_u64() & 1) ? Activation::silu : Activation::tanh;

        NetParams p = spread_params(arch, meta.next_u64(), 0.3);
        Array x = gaussian(meta, arch.input_dim);
        std::vector<double> times;
        for (std::size_t j = 0; j < arch.time_inputs; ++j)
            times.push_back(0.1 + 2.0 * meta.next_uniform());
        Array target = gaussian(meta, arch.output_dim);

        Array grad = grad_reverse(p, [&](GradGraph& g) {
            return g.sum_sq(g.sub(g.mlp(g.params(), x, times), g.constant(target)));
        });
        const double h = 1e-5;
        NetParams q = p;
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            double orig = q.values.data[i];
            q.values.data[i] = orig + h;
            double fp = squared_norm(mlp_forward(q, x, times) - target);
            q.values.data[i] = orig - h;
            double fm = squared_norm(mlp_forward(q, x, times) - target);
            q.values.data[i] = orig;
            worst_grad = std::max(worst_grad, rel_err(grad.data[i], (fp - fm) / (2.0 * h)));
        }

        Array tx = gaussian(meta, arch.input_dim);
        std::vector<double> tt;
        for (std::size_t j = 0; j < arch.time_inputs; ++j) tt.push_back(meta.next_gaussian());
        auto [value, jvp] = mlp_jvp(p, x, times, tx, tt);
        Array xp = x, xm = x;
        axpy(h, tx, xp);
        axpy(-h, tx, xm);
        std::vector<double> tp = times, tm = times;
        for (std::size_t j = 0; j < times.size(); ++j) {
            tp[j] += h * tt[j];
            tm[j] -= h * tt[j];
        }
        Array fp = mlp_forward(p, xp, tp);
        Array fm = mlp_forward(p, xm, tm);
        for (std::size_t i = 0; i < jvp.size(); ++i)
            worst_jvp = std::max(worst_jvp, rel_err(jvp.data[i], (fp.data[i] - fm.data[i]) / (2.0 * h)));
    }
    detail << "max rel err: grad " << worst_grad << ", jvp " << worst_jvp << " (tol 1e-4)";
    return worst_grad < 1e-4 && worst_jvp < 1e-4;
}

// ---------------------------------------------------------------------------
// criterion 2: solver global orders and round-trip orders
// ---------------------------------------------------------------------------
bool criterion_solver_orders(std::ostringstream& detail) {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec gmm = GmmSpec::single(Array{0.0}, 1.0);
    DriftModel drift = analytic_drift(gmm, edm);
    ReferenceFlow ref = ReferenceFlow::for_gmm(gmm, edm, 4096);
    Array x{2.0};
    std::vector<std::size_t> Ms{16, 32, 64, 128, 256};

    OrderFit euler = solver_order_fit(SolveMethod::euler, drift, edm, ref, x, 10.0, 0.002, Ms);
    OrderFit heun = solver_order_fit(SolveMethod::heun, drift, edm, ref, x, 10.0, 0.002, Ms);
    OrderFit ms2 = solver_order_fit(SolveMethod::ms2, drift, edm, ref, x, 10.0, 0.002, Ms,
                                    WarmupMode::heun);
    OrderFit ms3 = solver_order_fit(SolveMethod::ms3, drift, edm, ref, x, 10.0, 0.002, Ms,
                                    WarmupMode::heun);
    std::vector<std::size_t> Mr{8, 16, 32, 64};
    OrderFit rt_euler = round_trip_order_fit(SolveMethod::euler, drift, edm, x, 8.0, 0.5, Mr);
    OrderFit rt_heun = round_trip_order_fit(SolveMethod::heun, drift, edm, x, 8.0, 0.5, Mr);

    detail << "slopes: euler " << euler.slope << " heun " << heun.slope << " ms2 " << ms2.slope
           << " ms3 " << ms3.slope << " | round trip euler " << rt_euler.slope << " heun "
           << rt_heun.slope;
    return std::abs(euler.slope - 1.0) <= 0.2 && std::abs(heun.slope - 2.0) <= 0.2 &&
           ms2.slope >= 2.0 - 0.3 && ms3.slope >= 3.0 - 0.3 &&
           std::abs(rt_euler.slope - 1.0) <= 0.3 && std::abs(rt_heun.slope - 2.0) <= 0.3;
}

// ---------------------------------------------------------------------------
// criterion 3: forward / reverse oracle-loss equivalence (Theorem 1)
// ---------------------------------------------------------------------------
bool criterion_oracle_equivalence(std::ostringstream& detail) {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec gmm = GmmSpec::single(Array{0.0}, 1.0);
    ReferenceFlow ref = ReferenceFlow::for_gmm(gmm, edm, 256);

    MlpArch arch;
    arch.input_dim = 1;
    arch.hidden_widths = {16, 16};
    arch.output_dim = 1;

    std::vector<NetParams> heads;
    {
        RngState rng(1);
        heads.push_back(init_params(arch, rng));  // zero raw net
    }
    heads.push_back(spread_params(arch, 11, 0.1));
    heads.push_back(spread_params(arch, 12, 0.25));
    heads.push_back(spread_params(arch, 13, 0.4));
    heads.push_back(spread_params(arch, 14, 0.6));

    const std::size_t n = 100000;
    double worst_z = 0.0;
    for (std::size_t k = 0; k < heads.size(); ++k) {
        ConsistencyHead head{heads[k], edm, 1.0};
        RngState rf(1000 + k), rr(2000 + k);
        McEstimate fwd = oracle_cm_loss(head, ref, sample_marginal_batch(gmm, edm, n, rf));
        McEstimate rev = oracle_cm_loss_reverse(head, ref, sample_prior_batch(gmm, edm, n, rr));
        double comb = std::sqrt(fwd.stderr_ * fwd.stderr_ + rev.stderr_ * rev.stderr_);
        worst_z = std::max(worst_z, std::abs(fwd.mean - rev.mean) / comb);
    }

    // negative control: prior variance off by 2x must disagree beyond 3 sigma
    ConsistencyHead head{heads[2], edm, 1.0};
    RngState rf(3001), rr(3002);
    McEstimate fwd = oracle_cm_loss(head, ref, sample_marginal_batch(gmm, edm, n, rf));
    McEstimate bad = oracle_cm_loss_reverse(head, ref, sample_prior_batch(gmm, edm, n, rr, 2.0));
    double comb = std::sqrt(fwd.stderr_ * fwd.stderr_ + bad.stderr_ * bad.stderr_);
    double control_z = std::abs(fwd.mean - bad.mean) / comb;

    detail << "worst |z| over 5 heads " << worst_z << " (need < 3), mismatched-prior z "
           << control_z << " (need > 3)";
    return worst_z < 3.0 && control_z > 3.0;
}

// ---------------------------------------------------------------------------
// criterion 4: jump-vs-average-drift loss identity on 1e5 random instances
// ---------------------------------------------------------------------------
bool criterion_loss_identity(std::ostringstream& detail) {
    RngState rng(4u);
    double worst = 0.0;
    for (std::size_t rep = 0; rep < 100000; ++rep) {
        std::size_t dim = 1 + rng.next_u64() % 3;
        Array h = gaussian(rng, dim), x = gaussian(rng, dim), I = gaussian(rng, dim);
        double t = 0.1 + 2.9 * rng.next_uniform();
        double s = t - (0.01 + (t - 0.01) * rng.next_uniform());
        Array g = x - t * h;
        auto [lhs, rhs] = ctm_mf_identity(g, h, x, t, s, I);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    detail << "max |lhs - rhs| " << worst << " (tol 1e-10)";
    return worst <= 1e-10;
}

// ---------------------------------------------------------------------------
// criterion 5: teacher-NFE accounting
// ---------------------------------------------------------------------------
bool criterion_nfe(std::ostringstream& detail) {
    bool ok = nfe_per_pair(16, 2, 2, NfeScheme::cmt) == Rational{17, 16} &&
              nfe_per_pair(16, 3, 2, NfeScheme::cmt) == Rational{9, 8};
    for (std::size_t k : {1, 2, 3})
        ok = ok && nfe_per_pair(16, k, 1, NfeScheme::cmt) == Rational{1, 1};
    ok = ok && nfe_per_pair(16, 2, 1, NfeScheme::ct) == Rational{0, 1};
    // the in-band values from the s=2 column
    ok = ok && nfe_per_pair(16, 2, 2, NfeScheme::cmt).value() == 1.0625 &&
         nfe_per_pair(16, 3, 2, NfeScheme::cmt).value() == 1.125;
    detail << "M=16 s=2: k=2 -> 1.0625, k=3 -> 1.125; s=1 -> 1; ct -> 0 (exact rationals)";
    return ok;
}

// ---------------------------------------------------------------------------
// criterion 6: CMT mid-training learns the 1D Gaussian flow map
// ---------------------------------------------------------------------------
bool criterion_flow_map_learning(std::ostringstream& detail) {
    Schedule edm = Schedule::edm(0.002, 10.0);
    TrainConfig cfg;
    cfg.stage = Stage::midtrain_cm;
    cfg.dataset = Dataset::gaussian1d();
    cfg.sched = edm;
    cfg.arch.hidden_widths = {64, 64};
    cfg.sigma_data = 1.0;
    cfg.steps = 8000;  // <= 10k budget
    cfg.lr = 3e-3;
    cfg.lr_linear_decay = true;
    cfg.seed = 7;
    cfg.traj_M = 16;
    cfg.traj_method = SolveMethod::ms3;
    cfg.traj_warmup = WarmupMode::heun;
    cfg.traj_anchors = 16;
    cfg.report_every = 8000;
    RngState irng(1);
    NetParams init = init_params(cfg.head_arch(), irng);
    TeacherBundle teacher;
    teacher.drift = analytic_drift(cfg.dataset.gmm, cfg.sched);
    TrainResult res = train(cfg, init, teacher);
    if (res.aborted) {
        detail << "training aborted at step " << res.abort_step;
        return false;
    }
    ConsistencyHead head{res.params, edm, cfg.sigma_data};

    ReferenceFlow ref = ReferenceFlow::for_gmm(cfg.dataset.gmm, edm, 512);
    RngState brng(99);
    McEstimate oracle =
        oracle_cm_loss(head, ref, sample_marginal_batch(cfg.dataset.gmm, edm, 20000, brng));

    double sT = std::sqrt(1.0 + 100.0);
    double target_scale = std::sqrt(1.0 + edm.t_min * edm.t_min) / sT;
    double worst = 0.0;
    for (double x = -3.0 * sT; x <= 3.0 * sT; x += sT / 20.0)
        worst = std::max(worst,
                         std::abs(consistency_eval(head, Array{x}, 10.0).data[0] - target_scale * x));

    detail << "oracle CM loss " << oracle.mean << " (need < 1e-2), max |f(x,T) - x/sqrt(1+T^2)| "
           << worst << " (need <= 0.05)";
    return oracle.mean < 1e-2 && worst <= 0.05;
}

// ---------------------------------------------------------------------------
// criterion 7: bias ordering and E = B + V on the 2-component GMM testbed
// ---------------------------------------------------------------------------
bool criterion_bias_ordering(std::ostringstream& detail) {
    Schedule edm = Schedule::edm(0.002, 10.0);
    Dataset data = Dataset::gmm1d(1.0, 0.25);
    const GmmSpec& gmm = data.gmm;
    double sd = 1.0;
    MlpArch arch;
    arch.hidden_widths = {32, 32};
    TeacherBundle teacher;
    teacher.drift = analytic_drift(gmm, edm);

    auto make = [&](Stage stage, std::uint64_t seed) {
        TrainConfig c;
        c.stage = stage;
        c.dataset = data;
        c.sched = edm;
        c.arch = arch;
        c.sigma_data = sd;
        c.steps = 3000;  // matched budgets across schemes
        c.lr = 2e-3;
        c.lr_linear_decay = true;
        c.seed = seed;
        c.batch = 128;
        c.traj_M = 16;
        c.traj_anchors = 8;
        c.traj_method = SolveMethod::ms3;
        c.traj_warmup = WarmupMode::heun;
        c.delta_t = 0.01;
        c.report_every = 3000;
        return c;
    };
    RngState irng(1);
    NetParams init = init_params(make(Stage::midtrain_cm, 0).head_arch(), irng);
    NetParams th_cmt = train(make(Stage::midtrain_cm, 21), init, teacher).params;
    NetParams th_dm = train(make(Stage::pretrain_dm, 22), init, teacher).params;
    NetParams th_rand = spread_params(make(Stage::midtrain_cm, 0).head_arch(), 77, 0.5);

    const double delta_t = 0.01;
    ReferenceFlow ref = ReferenceFlow::for_gmm(gmm, edm, 512);
    XiSampler xi = gmm_xi_sampler(gmm, edm, edm.t_min + delta_t);
    PerSampleGrad sur = cm_surrogate_grad(edm, sd, delta_t);
    PerSampleGrad ora = oracle_loss_grad(edm, sd, ref);

    const std::size_t n = 10000;
    auto stats_for = [&](const NetParams& p) {
        RngState crn(4242);  // common random numbers across schemes
        GradStats b = grad_bias(sur, ora, xi, p, n, crn);
        GradStats v = grad_variance(sur, xi, p, n, crn);
        Array om = mean_gradient(ora, xi, p, n, crn);
        GradStats e = grad_mse(sur, om, xi, p, n, crn);
        b.variance = v.variance;
        b.stderr_var = v.stderr_var;
        b.mse = e.mse;
        b.stderr_mse = e.stderr_mse;
        return b;
    };
    GradStats s_cmt = stats_for(th_cmt);
    GradStats s_dm = stats_for(th_dm);
    GradStats s_rand = stats_for(th_rand);

    bool separated =
        s_cmt.bias_sq + 3.0 * s_cmt.stderr_bias < s_rand.bias_sq - 3.0 * s_rand.stderr_bias;
    bool cmt_le_dm = s_cmt.bias_sq <= s_dm.bias_sq;
    auto decomposition_ok = [&](const GradStats& s) {
        double comb = 3.0 * std::sqrt(s.stderr_bias * s.stderr_bias + s.stderr_var * s.stderr_var +
                                      s.stderr_mse * s.stderr_mse);
        return std::abs(s.mse - (s.bias_sq + s.variance)) <= comb + 1e-12;
    };
    bool decomposed =
        decomposition_ok(s_cmt) && decomposition_ok(s_dm) && decomposition_ok(s_rand);

    detail << "B: cmt " << s_cmt.bias_sq << "+-" << s_cmt.stderr_bias << ", dm " << s_dm.bias_sq
           << ", rand " << s_rand.bias_sq << "+-" << s_rand.stderr_bias
           << "; 3-sigma cmt<rand " << (separated ? "yes" : "no") << ", cmt<=dm "
           << (cmt_le_dm ? "yes" : "no") << ", E=B+V " << (decomposed ? "yes" : "no");
    return separated && cmt_le_dm && decomposed;
}

// ---------------------------------------------------------------------------
// criterion 8: pipeline benefit on 2D two-moons across 3 seeds
// ---------------------------------------------------------------------------
// frozen from the calibration run: converged post-training floor 0.048,
// threshold = 1.5x floor
constexpr double kMoonsW2Threshold = 0.072;

bool criterion_pipeline_benefit(std::ostringstream& detail) {
    Schedule edm = Schedule::edm(0.002, 10.0);
    Dataset data = Dataset::two_moons();
    double sd = 0.5;
    MlpArch arch;
    arch.hidden_widths = {64, 64};
    const std::size_t budget = 4000;

    bool all_pass = true;
    for (std::uint64_t run = 0; run < 3; ++run) {
        TrainConfig pre;
        pre.stage = Stage::pretrain_dm;
        pre.dataset = data;
        pre.sched = edm;
        pre.arch = arch;
        pre.sigma_data = sd;
        pre.steps = 6000;
        pre.lr = 2e-3;
        pre.lr_linear_decay = true;
        pre.batch = 256;
        pre.seed = 100 + run;
        pre.time_sampling = TimeSampling::log_uniform;
        pre.report_every = pre.steps;
        RngState irng(200 + run);
        NetParams pre_init = init_params(pre.head_arch(), irng);
        TrainResult dm = train(pre, pre_init);
        DenoiserHead dm_head{dm.params, edm, sd};
        TeacherBundle teacher;
        teacher.drift = drift_from_denoiser(dm_head);

        TrainConfig mid;
        mid.stage = Stage::midtrain_cm;
        mid.dataset = data;
        mid.sched = edm;
        mid.arch = arch;
        mid.sigma_data = sd;
        mid.steps = 4000;
        mid.lr = 2e-3;
        mid.lr_linear_decay = true;
        mid.seed = 300 + run;
        mid.traj_M = 16;
        mid.traj_anchors = 16;
        mid.traj_method = SolveMethod::ms3;
        mid.traj_warmup = WarmupMode::heun;
        mid.report_every = mid.steps;
        RngState irng2(400 + run);
        NetParams mid_init = init_params(mid.head_arch(), irng2);
        TrainResult cmt = train(mid, mid_init, teacher);

        auto steps_to_threshold = [&](const NetParams& init) -> long long {
            ConsistencyHead at_start{init, edm, sd};
            if (moons_w2_cm(at_start, 900 + run) <= kMoonsW2Threshold) return 0;
            TrainConfig post;
            post.stage = Stage::posttrain_ct;
            post.dataset = data;
            post.sched = edm;
            post.arch = arch;
            post.sigma_data = sd;
            post.steps = budget;
            post.lr = 5e-4;
            post.lr_linear_decay = true;
            post.batch = 128;
            post.seed = 500 + run;
            post.delta_t = 0.02;
            post.time_sampling = TimeSampling::log_uniform;
            post.report_every = 250;
            long long reached = static_cast<long long>(budget);  // never-reached -> budget
            bool found = false;
            train(post, init, {}, [&](const LossReport& rep, const NetParams& p) {
                if (found) return;
                ConsistencyHead h{p, edm, sd};
                if (moons_w2_cm(h, 900 + run) <= kMoonsW2Threshold) {
                    reached = rep.step;
                    found = true;
                }
            });
            return reached;
        };

        long long cmt_steps = steps_to_threshold(cmt.params);
        long long rand_steps = steps_to_threshold(mid_init);
        bool run_pass = 2 * cmt_steps <= rand_steps || (cmt_steps == 0 && rand_steps == 0);
        // a run where both start below threshold would be vacuous; require the
        // random start to actually need work
        run_pass = run_pass && !(rand_steps == 0);
        all_pass = all_pass && run_pass;
        detail << "[seed " << run << ": cmt " << cmt_steps << " vs random " << rand_steps
               << " steps] ";
    }
    detail << "threshold " << kMoonsW2Threshold;
    return all_pass;
}

// ---------------------------------------------------------------------------
// criterion 9: MF path on two-moons
// ---------------------------------------------------------------------------
bool criterion_mf_path(std::ostringstream& detail) {
    Schedule fm = Schedule::fm();
    Dataset data = Dataset::two_moons();
    MlpArch arch;
    arch.hidden_widths = {64, 64};

    TrainConfig pre;
    pre.stage = Stage::pretrain_fm;
    pre.dataset = data;
    pre.sched = fm;
    pre.arch = arch;
    pre.steps = 6000;
    pre.lr = 2e-3;
    pre.lr_linear_decay = true;
    pre.batch = 256;
    pre.seed = 41;
    pre.report_every = pre.steps;
    RngState irng(3);
    NetParams pre_init = init_params(pre.head_arch(), irng);
    TrainResult fm_teacher = train(pre, pre_init);
    VelocityHead v_head{fm_teacher.params, fm};
    TeacherBundle teacher;
    teacher.drift = drift_from_velocity(v_head);

    TrainConfig mid;
    mid.stage = Stage::midtrain_mf;
    mid.dataset = data;
    mid.sched = fm;
    mid.arch = arch;
    mid.steps = 4000;
    mid.lr = 2e-3;
    mid.lr_linear_decay = true;
    mid.seed = 42;
    mid.traj_M = 8;
    mid.traj_anchors = 8;
    mid.traj_method = SolveMethod::heun;
    mid.traj_grid = GridKind::uniform;
    mid.report_every = mid.steps;
    RngState irng2(4);
    NetParams mid_init = init_params(mid.head_arch(), irng2);
    TrainResult cmt = train(mid, mid_init, teacher);

    TrainConfig post;
    post.stage = Stage::posttrain_mf;
    post.dataset = data;
    post.sched = fm;
    post.arch = arch;
    post.steps = 6000;
    post.lr = 5e-4;
    post.lr_linear_decay = true;
    post.batch = 128;
    post.seed = 43;
    post.mf_velocity = MfVelocitySource::conditional;
    post.report_every = post.steps;
    TrainResult mf = train(post, cmt.params);
    if (mf.aborted) {
        detail << "MF post-training aborted at step " << mf.abort_step;
        return false;
    }
    AvgDriftHead head{mf.params, fm};
    double w1 = moons_w2_mf(head, 1, 901);
    double w8 = moons_w2_mf(head, 8, 901);

    // mf_target JVP correctness at the trained parameters
    AvgDriftHead frozen = head;
    RngState rng(5);
    double worst = 0.0;
    const double h_fd = 1e-5;
    for (int rep = 0; rep < 25; ++rep) {
        Array x = gaussian(rng, 2);
        Array v = gaussian(rng, 2);
        double a = rng.next_uniform(), b = rng.next_uniform();
        double t = std::max(a, b), s = std::min(a, b);
        auto [hv, jvp] = mlp_jvp(frozen.params, x, {t, s}, v, {1.0, 0.0});
        Array xp = x, xm = x;
        axpy(h_fd, v, xp);
        axpy(-h_fd, v, xm);
        Array fp = mlp_forward(frozen.params, xp, {t + h_fd, s});
        Array fm_ = mlp_forward(frozen.params, xm, {t - h_fd, s});
        for (std::size_t i = 0; i < jvp.size(); ++i)
            worst = std::max(worst, rel_err(jvp.data[i], (fp.data[i] - fm_.data[i]) / (2.0 * h_fd)));
        Array target = mf_target(frozen, v, x, t, s);
        for (std::size_t i = 0; i < target.size(); ++i)
            if (std::abs(target.data[i] - (v.data[i] - (t - s) * jvp.data[i])) > 1e-12)
                worst = 1.0;
    }

    detail << "1-step sliced-W2 " << w1 << ", 8-step " << w8 << " (need 1-step <= 2x 8-step); "
           << "mf-target jvp max rel err " << worst << " (tol 1e-4)";
    return w1 <= 2.0 * w8 && worst < 1e-4;
}

// ---------------------------------------------------------------------------
// criterion 10: CLI determinism (byte-identical artifacts on rerun)
// ---------------------------------------------------------------------------
int run_cli(const std::string& args) {
    std::string cmd = std::string(FLOWLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

bool criterion_determinism(std::ostringstream& detail) {
    fs::path dir = fs::temp_directory_path() / "flowlab_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);

    std::string base =
        "--set data.kind=gaussian1d --set arch.hidden=16,16 --set model.sigma_data=1 "
        "--set seed=5 --set train.report_every=50 ";
    auto identical = [&](const fs::path& a, const fs::path& b) {
        for (const auto& entry : fs::directory_iterator(a)) {
            std::string name = entry.path().filename().string();
            if (read_text_file(entry.path().string()) !=
                read_text_file((b / name).string()))
                return false;
        }
        return true;
    };

    struct Step {
        std::string name;
        std::string args;
    };
    fs::path pre_a = dir / "pre_a";
    std::vector<Step> steps{
        {"pretrain", "pretrain " + base + "--set train.steps=200 "},
        {"midtrain", "midtrain " + base +
                         "--set teacher.analytic=true --set train.steps=100 --set traj.M=8 "
                         "--set traj.anchors=4 "},
        {"posttrain",
         "posttrain " + base +
             "--set stage=posttrain-ct --set train.steps=100 --set train.delta_t=0.02 "
             "--set init.checkpoint=" + (pre_a / "checkpoint.ckpt").string() + " "},
        {"sample", "sample " + base + "--set sample.n=512 --set sample.steps=2 "
                       "--set sample.checkpoint=" + (pre_a / "checkpoint.ckpt").string() + " "},
        {"trajectories", "trajectories " + base +
                             "--set teacher.analytic=true --set traj.M=8 --set traj.n_anchors=3 "},
        {"diagnose", "diagnose " + base +
                         "--set stage=posttrain-ct --set data.kind=gmm1d --set diag.schemes=random "
                         "--set diag.stats_samples=200 --set diag.eval_samples=200 "
                         "--set diag.ref_steps=128 --set train.steps=40 "},
        {"nfe-table", "nfe-table "},
    };

    for (const Step& step : steps) {
        fs::path a = dir / (step.name + "_a");
        fs::path b = dir / (step.name + "_b");
        int rc1 = run_cli(step.args + "--out " + a.string());
        int rc2 = run_cli(step.args + "--out " + b.string());
        if (rc1 != 0 || rc2 != 0) {
            detail << step.name << " exited " << rc1 << "/" << rc2;
            return false;
        }
        if (!identical(a, b)) {
            detail << step.name << " reruns differ";
            return false;
        }
    }
    detail << "7 commands rerun byte-identically (checkpoints, CSVs, reports, manifests)";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 2 && std::string(argv[1]) == "--only") only = std::atoi(argv[2]);

    run_criterion(1, "gradient/jvp correctness", criterion_gradients, only);
    run_criterion(2, "solver orders", criterion_solver_orders, only);
    run_criterion(3, "oracle-loss equivalence", criterion_oracle_equivalence, only);
    run_criterion(4, "jump/average-drift loss identity", criterion_loss_identity, only);
    run_criterion(5, "teacher NFE accounting", criterion_nfe, only);
    run_criterion(6, "flow-map learning", criterion_flow_map_learning, only);
    run_criterion(7, "gradient-bias ordering", criterion_bias_ordering, only);
    run_criterion(8, "pipeline benefit", criterion_pipeline_benefit, only);
    run_criterion(9, "mean-flow path", criterion_mf_path, only);
    run_criterion(10, "CLI determinism", criterion_determinism, only);

    int failures = 0;
    for (const Criterion& c : g_results) failures += c.pass ? 0 : 1;
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
