#include "flowlab/solvers.hpp"

#include <cmath>

namespace flowlab {

SolveMethod parse_solve_method(const std::string& name) {
    if (name == "euler") return SolveMethod::euler;
    if (name == "heun") return SolveMethod::heun;
    if (name == "ms2") return SolveMethod::ms2;
    if (name == "ms3") return SolveMethod::ms3;
    throw ConfigError("unknown solver method '" + name + "'");
}

std::string to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::euler: return "euler";
        case SolveMethod::heun: return "heun";
        case SolveMethod::ms2: return "ms2";
        case SolveMethod::ms3: return "ms3";
    }
    return "?";
}

Array euler_step(const DriftModel& drift, const Array& x, double t, double s) {
    if (s == t) return x;
    Array out = x;
    axpy(s - t, drift(x, t), out);
    return out;
}

Array heun_step(const DriftModel& drift, const Array& x, double t, double s) {
    if (s == t) return x;
    Array v1 = drift(x, t);
    Array pred = x;
    axpy(s - t, v1, pred);
    Array v2 = drift(pred, s);
    Array out = x;
    axpy(0.5 * (s - t), v1, out);
    axpy(0.5 * (s - t), v2, out);
    return out;
}

namespace {

// I_k(h) = int_0^h e^tau tau^k dtau
inline double exp_weight0(double h) { return std::expm1(h); }
inline double exp_weight1(double h) { return std::exp(h) * (h - 1.0) + 1.0; }
inline double exp_weight2(double h) { return std::exp(h) * (h * h - 2.0 * h + 2.0) - 2.0; }

}  // namespace

std::pair<Array, MultistepState> multistep_step(const DriftModel& drift, const Schedule& sched,
                                                const MultistepState& ms, const Array& x, double t,
                                                double s, long long* nfe) {
    if (s == t) throw DomainError("multistep needs distinct times");
    if (ms.order < 1 || ms.order > 3) throw DomainError("multistep order must be 1, 2 or 3");
    if (!(sched.sigma(s) > 0.0) || !(sched.sigma(t) > 0.0))
        throw DomainError("multistep solver needs sigma > 0 on the whole step");

    double lam_u = sched.log_snr(t);
    double lam_w = sched.log_snr(s);
    double dir = lam_w - lam_u;
    if (dir == 0.0) throw DomainError("multistep step has zero log-SNR extent");
    if (!ms.history.empty() && !((lam_u - ms.history.front().first) * dir > 0.0))
        throw DomainError("multistep history times are not monotone with the step");
    if (ms.history.size() >= 2 && !((ms.history[0].first - ms.history[1].first) * dir > 0.0))
        throw DomainError("multistep history times are not monotone with the step");

    Array v_u = drift(x, t);
    if (nfe) ++*nfe;
    Array d_u = velocity_to_denoiser(sched, v_u, x, t);

    std::size_t have = ms.history.size();
    Array next(x.size());
    bool heun_bootstrap =
        ms.warmup == WarmupMode::heun && have + 1 < static_cast<std::size_t>(ms.order);
    if (heun_bootstrap) {
        Array pred = x;
        axpy(s - t, v_u, pred);
        Array v_s = drift(pred, s);
        if (nfe) ++*nfe;
        next = x;
        axpy(0.5 * (s - t), v_u, next);
        axpy(0.5 * (s - t), v_s, next);
    } else {
        int q = std::min<int>(ms.order, static_cast<int>(have) + 1);
        double h = lam_w - lam_u;
        double su = sched.sigma(t), sw = sched.sigma(s), au = sched.alpha(t);

        // data prediction extrapolated in log-SNR time
        Array correction = exp_weight0(h) * d_u;
        if (q >= 2) {
            double h1 = lam_u - ms.history[0].first;
            Array slope = (1.0 / h1) * (d_u - ms.history[0].second);
            if (q == 2) {
                axpy(exp_weight1(h), slope, correction);
            } else {
                double h2 = ms.history[0].first - ms.history[1].first;
                Array slope_prev = (1.0 / h2) * (ms.history[0].second - ms.history[1].second);
                Array curv = (1.0 / (h1 + h2)) * (slope - slope_prev);
                axpy(exp_weight1(h), slope + h1 * curv, correction);
                axpy(exp_weight2(h), curv, correction);
            }
        }
        next = (sw / su) * x;
        axpy(sw * au / su, correction, next);
    }

    MultistepState advanced = ms;
    advanced.history.insert(advanced.history.begin(), {lam_u, d_u});
    if (advanced.history.size() > static_cast<std::size_t>(ms.order - 1))
        advanced.history.resize(static_cast<std::size_t>(ms.order - 1));
    return {std::move(next), std::move(advanced)};
}

Trajectory solve(const DriftModel& drift, const Schedule& sched, const TimeGrid& grid,
                 const Array& x_start, SolveMethod method, WarmupMode warmup) {
    grid.validate();
    std::size_t M = grid.steps();
    Trajectory traj;
    traj.grid = grid;
    traj.states.assign(M + 1, Array());
    traj.states[M] = x_start;

    long long nfes = 0;
    DriftModel counted{[&](const Array& x, double t) {
                           ++nfes;
                           return drift(x, t);
                       },
                       drift.source};

    Array x = x_start;
    MultistepState ms;
    ms.order = method == SolveMethod::ms3 ? 3 : 2;
    ms.warmup = warmup;
    for (std::size_t k = 0; k + 1 <= M; ++k) {
        double t = grid.values[k], s = grid.values[k + 1];
        switch (method) {
            case SolveMethod::euler: x = euler_step(counted, x, t, s); break;
            case SolveMethod::heun: x = heun_step(counted, x, t, s); break;
            case SolveMethod::ms2:
            case SolveMethod::ms3: {
                long long dummy = 0;
                auto [next, advanced] = multistep_step(drift, sched, ms, x, t, s, &dummy);
                nfes += dummy;
                x = std::move(next);
                ms = std::move(advanced);
                break;
            }
        }
        traj.states[M - 1 - k] = x;
    }
    traj.teacher_nfes = nfes;
    return traj;
}

Array round_trip(const DriftModel& drift, const Schedule& sched, const Array& x, double t,
                 double s, std::size_t M, SolveMethod method, WarmupMode warmup) {
    if (t == s) throw DomainError("round trip needs t != s");
    if (M == 0) throw DomainError("round trip needs M >= 1");
    auto run = [&](Array start, double a, double b) {
        Array cur = std::move(start);
        MultistepState ms;
        ms.order = method == SolveMethod::ms3 ? 3 : 2;
        ms.warmup = warmup;
        for (std::size_t k = 0; k < M; ++k) {
            double u = a + (b - a) * static_cast<double>(k) / static_cast<double>(M);
            double w = a + (b - a) * static_cast<double>(k + 1) / static_cast<double>(M);
            if (k + 1 == M) w = b;
            switch (method) {
                case SolveMethod::euler: cur = euler_step(drift, cur, u, w); break;
                case SolveMethod::heun: cur = heun_step(drift, cur, u, w); break;
                case SolveMethod::ms2:
                case SolveMethod::ms3: {
                    auto [next, advanced] = multistep_step(drift, sched, ms, cur, u, w);
                    cur = std::move(next);
                    ms = std::move(advanced);
                    break;
                }
            }
        }
        return cur;
    };
    Array there = run(x, t, s);
    return run(std::move(there), s, t);
}

long long trajectory_nfes(SolveMethod method, WarmupMode warmup, std::size_t M) {
    long long m = static_cast<long long>(M);
    switch (method) {
        case SolveMethod::euler: return m;
        case SolveMethod::heun: return 2 * m;
        case SolveMethod::ms2:
        case SolveMethod::ms3: {
            long long k = method == SolveMethod::ms3 ? 3 : 2;
            long long s = warmup == WarmupMode::heun ? 2 : 1;
            return m + (s - 1) * (k - 1);
        }
    }
    return 0;
}

}  // namespace flowlab
