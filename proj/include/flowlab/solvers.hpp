#pragma once

#include <functional>
#include <utility>

#include "flowlab/schedule.hpp"

namespace flowlab {

enum class DriftSource { teacher_denoiser, teacher_velocity, analytic_oracle };

// Velocity field of the PF-ODE, dx/dt = v(x, t).
struct DriftModel {
    std::function<Array(const Array&, double)> velocity;
    DriftSource source = DriftSource::analytic_oracle;

    Array operator()(const Array& x, double t) const { return velocity(x, t); }
};

// Reference states along one solver run. states[i] = x_hat at t_i where the
// grid index i increases toward t_max; states.back() is the anchor x_T and
// states.front() the clean endpoint.
struct Trajectory {
    TimeGrid grid;
    std::vector<Array> states;
    long long teacher_nfes = 0;

    std::size_t steps() const { return grid.steps(); }
};

enum class SolveMethod { euler, heun, ms2, ms3 };
enum class WarmupMode { escalate, heun };  // warmup cost s=1 resp. s=2 per bootstrap step

SolveMethod parse_solve_method(const std::string& name);
std::string to_string(SolveMethod m);

// x + (s - t) * v(x, t); one drift evaluation
Array euler_step(const DriftModel& drift, const Array& x, double t, double s);
// trapezoidal predictor-corrector; two drift evaluations
Array heun_step(const DriftModel& drift, const Array& x, double t, double s);

// History carried by the multistep solver: (log-SNR, data prediction) pairs
// of up to order-1 previous grid nodes, most recent first.
struct MultistepState {
    int order = 2;  // k in {1, 2, 3}
    WarmupMode warmup = WarmupMode::escalate;
    std::vector<std::pair<double, Array>> history;
};

// One data-prediction multistep update in log-SNR time; valid for schedules
// with sigma > 0 on the whole step (EDM). Returns the new state and the
// advanced history. nfe, when given, accumulates drift evaluations.
std::pair<Array, MultistepState> multistep_step(const DriftModel& drift, const Schedule& sched,
                                                const MultistepState& ms, const Array& x, double t,
                                                double s, long long* nfe = nullptr);

Trajectory solve(const DriftModel& drift, const Schedule& sched, const TimeGrid& grid,
                 const Array& x_start, SolveMethod method,
                 WarmupMode warmup = WarmupMode::escalate);

// Integrate t -> s and back on mirrored uniform grids of M steps each.
Array round_trip(const DriftModel& drift, const Schedule& sched, const Array& x, double t,
                 double s, std::size_t M, SolveMethod method,
                 WarmupMode warmup = WarmupMode::escalate);

// Drift evaluations for one trajectory of M steps: M + (s_warm - 1)(k - 1)
// for the multistep scheme, M for Euler, 2M for Heun.
long long trajectory_nfes(SolveMethod method, WarmupMode warmup, std::size_t M);

}  // namespace flowlab
