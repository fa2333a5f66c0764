#include "flowlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowlab {

XiSampler gmm_xi_sampler(const GmmSpec& gmm, const Schedule& sched, double t_lo) {
    return [gmm, sched, t_lo](RngState& rng) {
        XiSample xi;
        xi.t = t_lo + (sched.t_max - t_lo) * rng.next_uniform();
        xi.x0 = sample_gmm(gmm, rng);
        xi.eps = gaussian(rng, gmm.dim());
        return xi;
    };
}

PerSampleGrad cm_surrogate_grad(const Schedule& sched, double sigma_data, double delta_t) {
    return [sched, sigma_data, delta_t](const NetParams& params, const XiSample& xi) {
        ConsistencyHead frozen{params, sched, sigma_data};
        std::vector<PerturbSample> one{{xi.x0, xi.eps, xi.t}};
        return grad_reverse(params, [&](GradGraph& g) {
            return node_ct(g, frozen, sched, sigma_data, one, delta_t);
        });
    };
}

PerSampleGrad oracle_loss_grad(const Schedule& sched, double sigma_data,
                               const ReferenceFlow& ref) {
    return [sched, sigma_data, ref](const NetParams& params, const XiSample& xi) {
        Array x_t = perturb(sched, xi.x0, xi.eps, xi.t);
        Array target = reference_flow_map(ref, x_t, xi.t, sched.terminal_time());
        return grad_reverse(params, [&](GradGraph& g) {
            GradGraph::Node f = precond_node(g, sigma_data, x_t, xi.t);
            return g.sum_sq(g.sub(f, g.constant(target)));
        });
    };
}

namespace {

struct JackknifeOut {
    double estimate = 0.0;
    double stderr_ = 0.0;
};

// standard error of a statistic from its leave-one-out replicates
JackknifeOut jackknife(const std::vector<double>& replicates, double full_estimate) {
    JackknifeOut out;
    out.estimate = full_estimate;
    std::size_t n = replicates.size();
    if (n < 2) return out;
    double mean = std::accumulate(replicates.begin(), replicates.end(), 0.0) /
                  static_cast<double>(n);
    double ss = 0.0;
    for (double r : replicates) ss += (r - mean) * (r - mean);
    out.stderr_ = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
    return out;
}

}  // namespace

GradStats grad_bias(const PerSampleGrad& surrogate, const PerSampleGrad& oracle,
                    const XiSampler& xi, const NetParams& params, std::size_t n, RngState rng) {
    if (n < 100) throw DomainError("bias estimation needs n >= 100");
    const RngState replay = rng;

    // pass 1: mean gradient difference
    Array sum_d(params.values.size());
    for (std::size_t i = 0; i < n; ++i) {
        XiSample s = xi(rng);
        Array d = oracle(params, s) - surrogate(params, s);
        axpy(1.0, d, sum_d);
    }
    Array mean_d = (1.0 / static_cast<double>(n)) * sum_d;
    double bias = squared_norm(mean_d);

    // pass 2 (same stream): scalars for leave-one-out replicates
    rng = replay;
    std::vector<double> rep(n);
    double dn = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        XiSample s = xi(rng);
        Array d = oracle(params, s) - surrogate(params, s);
        double a = dot(mean_d, d);
        double b = squared_norm(d);
        rep[i] = (dn * dn * bias - 2.0 * dn * a + b) / ((dn - 1.0) * (dn - 1.0));
    }
    JackknifeOut jk = jackknife(rep, bias);

    GradStats stats;
    stats.bias_sq = bias;
    stats.stderr_bias = jk.stderr_;
    stats.n_samples = n;
    return stats;
}

GradStats grad_variance(const PerSampleGrad& surrogate, const XiSampler& xi,
                        const NetParams& params, std::size_t n, RngState rng) {
    if (n < 100) throw DomainError("variance estimation needs n >= 100");
    const RngState replay = rng;

    Array sum_g(params.values.size());
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        XiSample s = xi(rng);
        Array g = surrogate(params, s);
        axpy(1.0, g, sum_g);
        sum_sq += squared_norm(g);
    }
    double dn = static_cast<double>(n);
    Array mean_g = (1.0 / dn) * sum_g;
    double mg2 = squared_norm(mean_g);
    double variance = sum_sq / dn - mg2;

    rng = replay;
    std::vector<double> rep(n);
    for (std::size_t i = 0; i < n; ++i) {
        XiSample s = xi(rng);
        Array g = surrogate(params, s);
        double s2 = squared_norm(g);
        double c = dot(mean_g, g);
        double loo_mean_sq = (dn * dn * mg2 - 2.0 * dn * c + s2) / ((dn - 1.0) * (dn - 1.0));
        rep[i] = (sum_sq - s2) / (dn - 1.0) - loo_mean_sq;
    }
    JackknifeOut jk = jackknife(rep, variance);

    GradStats stats;
    stats.variance = variance;
    stats.stderr_var = jk.stderr_;
    stats.n_samples = n;
    return stats;
}

GradStats grad_mse(const PerSampleGrad& surrogate, const Array& oracle_grad, const XiSampler& xi,
                   const NetParams& params, std::size_t n, RngState rng) {
    if (n < 100) throw DomainError("mse estimation needs n >= 100");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        XiSample s = xi(rng);
        values[i] = squared_norm(surrogate(params, s) - oracle_grad);
    }
    double dn = static_cast<double>(n);
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / dn;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);

    GradStats stats;
    stats.mse = mean;
    stats.stderr_mse = std::sqrt(ss / (dn - 1.0) / dn);
    stats.n_samples = n;
    return stats;
}

Array mean_gradient(const PerSampleGrad& grad, const XiSampler& xi, const NetParams& params,
                    std::size_t n, RngState rng) {
    Array sum(params.values.size());
    for (std::size_t i = 0; i < n; ++i) {
        XiSample s = xi(rng);
        axpy(1.0, grad(params, s), sum);
    }
    return (1.0 / static_cast<double>(n)) * sum;
}

std::vector<InitComparison> compare_inits(const std::vector<InitScheme>& schemes,
                                          const TrainConfig& post_config,
                                          const ReferenceFlow& ref, std::size_t stats_samples,
                                          std::size_t eval_samples, std::uint64_t eval_seed) {
    if (!post_config.dataset.has_oracle())
        throw DomainError("init comparison needs an analytic (GMM) dataset");
    const GmmSpec& gmm = post_config.dataset.gmm;
    const Schedule& sched = post_config.sched;

    // fixed evaluation batch, shared across schemes
    RngState eval_rng(eval_seed);
    auto eval_batch = sample_marginal_batch(gmm, sched, eval_samples, eval_rng);

    XiSampler xi = gmm_xi_sampler(gmm, sched, sched.terminal_time() + post_config.delta_t);
    PerSampleGrad surrogate = cm_surrogate_grad(sched, post_config.sigma_data, post_config.delta_t);
    PerSampleGrad oracle = oracle_loss_grad(sched, post_config.sigma_data, ref);

    std::vector<InitComparison> out;
    for (const InitScheme& scheme : schemes) {
        InitComparison cmp;
        cmp.scheme = scheme.name;

        RngState stats_rng(eval_seed ^ 0x9e3779b97f4a7c15ULL);  // common across schemes
        cmp.stats = grad_bias(surrogate, oracle, xi, scheme.params, stats_samples, stats_rng);
        GradStats var = grad_variance(surrogate, xi, scheme.params, stats_samples, stats_rng);
        cmp.stats.variance = var.variance;
        cmp.stats.stderr_var = var.stderr_var;
        Array oracle_mean = mean_gradient(oracle, xi, scheme.params, stats_samples, stats_rng);
        GradStats mse = grad_mse(surrogate, oracle_mean, xi, scheme.params, stats_samples,
                                 stats_rng);
        cmp.stats.mse = mse.mse;
        cmp.stats.stderr_mse = mse.stderr_mse;

        auto eval_oracle = [&](const NetParams& params) {
            ConsistencyHead head{params, sched, post_config.sigma_data};
            return oracle_cm_loss(head, ref, eval_batch).mean;
        };
        cmp.post_train_curve.emplace_back(0, eval_oracle(scheme.params));

        TrainResult res = train(post_config, scheme.params, {},
                                [&](const LossReport& rep, const NetParams& params) {
                                    cmp.post_train_curve.emplace_back(rep.step,
                                                                      eval_oracle(params));
                                });
        if (res.aborted) {
            cmp.diverged = true;
            cmp.diverged_step = res.abort_step;
        }
        out.push_back(std::move(cmp));
    }
    return out;
}

namespace {

OrderFit fit_loglog(const std::vector<double>& dts, const std::vector<double>& errs) {
    OrderFit fit;
    double floor = 1e-13;
    bool all_tiny = true;
    for (double e : errs) all_tiny = all_tiny && e < floor;
    if (all_tiny) {
        fit.exact = true;
        return fit;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    std::size_t n = dts.size();
    for (std::size_t i = 0; i < n; ++i) {
        double lx = std::log(dts[i]), ly = std::log(std::max(errs[i], floor));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    double dn = static_cast<double>(n);
    double cov = dn * sxy - sx * sy;
    double varx = dn * sxx - sx * sx;
    double vary = dn * syy - sy * sy;
    fit.slope = cov / varx;
    fit.r2 = vary > 0 ? (cov * cov) / (varx * vary) : 1.0;
    return fit;
}

TimeGrid segment_grid(const Schedule& sched, double t, double s, std::size_t M) {
    // same spacing family as the trajectory grids: power-law for EDM
    TimeGrid grid;
    grid.values.resize(M + 1);
    if (sched.kind == ScheduleKind::edm && t > s) {
        double inv_rho = 1.0 / sched.rho;
        double a = std::pow(t, inv_rho), b = std::pow(s, inv_rho);
        for (std::size_t k = 0; k <= M; ++k) {
            double frac = static_cast<double>(k) / static_cast<double>(M);
            grid.values[k] = std::pow(a + frac * (b - a), sched.rho);
        }
    } else {
        for (std::size_t k = 0; k <= M; ++k) {
            double frac = static_cast<double>(k) / static_cast<double>(M);
            grid.values[k] = t + frac * (s - t);
        }
    }
    grid.values.front() = t;
    grid.values.back() = s;
    return grid;
}

}  // namespace

OrderFit solver_order_fit(SolveMethod method, const DriftModel& drift, const Schedule& sched,
                          const ReferenceFlow& ref, const Array& x, double t, double s,
                          const std::vector<std::size_t>& step_counts, WarmupMode warmup) {
    if (step_counts.size() < 4) throw DomainError("order fit needs at least 4 step counts");
    std::vector<double> dts, errs;
    Array exact = reference_flow_map(ref, x, t, s);
    for (std::size_t M : step_counts) {
        TimeGrid grid = segment_grid(sched, t, s, M);
        Trajectory traj = solve(drift, sched, grid, x, method, warmup);
        dts.push_back(std::abs(t - s) / static_cast<double>(M));
        errs.push_back(norm(traj.states.front() - exact));
    }
    return fit_loglog(dts, errs);
}

OrderFit round_trip_order_fit(SolveMethod method, const DriftModel& drift, const Schedule& sched,
                              const Array& x, double t, double s,
                              const std::vector<std::size_t>& step_counts, WarmupMode warmup) {
    if (step_counts.size() < 4) throw DomainError("order fit needs at least 4 step counts");
    std::vector<double> dts, errs;
    for (std::size_t M : step_counts) {
        Array back = round_trip(drift, sched, x, t, s, M, method, warmup);
        dts.push_back(std::abs(t - s) / static_cast<double>(M));
        errs.push_back(norm(back - x));
    }
    return fit_loglog(dts, errs);
}

std::pair<double, double> ctm_mf_identity(const Array& g_val, const Array& h_val, const Array& x,
                                          double t, double s, const Array& target_integral) {
    if (t == 0.0) throw DomainError("identity undefined at t = 0");
    if (std::abs(t - s) < 1e-9) throw DomainError("identity singular at t == s");
    check_same_size(g_val, h_val, "ctm_mf_identity");
    check_same_size(g_val, x, "ctm_mf_identity");
    check_same_size(g_val, target_integral, "ctm_mf_identity");
    // coupling g = x - t h is a precondition
    for (std::size_t i = 0; i < g_val.size(); ++i) {
        double expect = x.data[i] - t * h_val.data[i];
        double scale = std::max({1.0, std::abs(g_val.data[i]), std::abs(expect)});
        if (std::abs(g_val.data[i] - expect) > 1e-9 * scale)
            throw DomainError("g_val does not satisfy g = x - t h");
    }
    Array lhs_vec = g_val - x;
    axpy(-t / (t - s), target_integral, lhs_vec);
    double lhs = squared_norm(lhs_vec) / (t * t);
    Array rhs_vec = h_val;
    axpy(-1.0 / (s - t), target_integral, rhs_vec);
    double rhs = squared_norm(rhs_vec);
    return {lhs, rhs};
}

Rational nfe_per_pair(std::size_t M, std::size_t k, std::size_t s_warm, NfeScheme scheme) {
    if (M < k || k < 1) throw DomainError("nfe accounting needs M >= k >= 1");
    switch (scheme) {
        case NfeScheme::ct: return Rational{0, 1};
        case NfeScheme::cd: return Rational{static_cast<long long>(s_warm), 1};
        case NfeScheme::cmt: {
            long long num = static_cast<long long>(M) +
                            static_cast<long long>(s_warm - 1) * static_cast<long long>(k - 1);
            long long den = static_cast<long long>(M);
            long long g = std::gcd(num, den);
            return Rational{num / g, den / g};
        }
    }
    return Rational{};
}

double wasserstein_1d(const Array& a, const Array& b) {
    if (a.size() == 0 || b.size() == 0) throw DomainError("empty sample set");
    std::vector<double> sa = a.data, sb = b.data;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::size_t n = std::max(sa.size(), sb.size());
    auto quantile = [](const std::vector<double>& v, double p) {
        double pos = p * static_cast<double>(v.size()) - 0.5;
        if (pos <= 0.0) return v.front();
        if (pos >= static_cast<double>(v.size() - 1)) return v.back();
        std::size_t lo = static_cast<std::size_t>(pos);
        double frac = pos - static_cast<double>(lo);
        return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
    };
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        double d = quantile(sa, p) - quantile(sb, p);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double sliced_w2(const std::vector<Array>& a, const std::vector<Array>& b, std::size_t n_dirs,
                 RngState& rng) {
    if (a.empty() || b.empty()) throw DomainError("empty sample set");
    std::size_t dim = a.front().size();
    double acc = 0.0;
    for (std::size_t d = 0; d < n_dirs; ++d) {
        Array dir = gaussian(rng, dim);
        double nrm = norm(dir);
        if (nrm == 0.0) continue;
        Array pa(a.size()), pb(b.size());
        for (std::size_t i = 0; i < a.size(); ++i) pa.data[i] = dot(a[i], dir) / nrm;
        for (std::size_t i = 0; i < b.size(); ++i) pb.data[i] = dot(b[i], dir) / nrm;
        acc += wasserstein_1d(pa, pb);
    }
    return acc / static_cast<double>(n_dirs);
}

}  // namespace flowlab
