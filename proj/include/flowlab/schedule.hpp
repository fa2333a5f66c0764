#pragma once

#include <cstddef>
#include <vector>

#include "flowlab/array.hpp"

namespace flowlab {

enum class ScheduleKind { edm, fm };

// Noise schedule (alpha_t, sigma_t) with derivatives.
// EDM: alpha = 1, sigma = t on [t_min, t_max], t_min > 0.
// FM:  alpha = 1 - t, sigma = t on [0, 1].
struct Schedule {
    ScheduleKind kind = ScheduleKind::edm;
    double t_min = 0.002;
    double t_max = 10.0;
    double rho = 7.0;  // power-grid exponent

    static Schedule edm(double t_min = 0.002, double t_max = 10.0, double rho = 7.0);
    static Schedule fm(double t_max = 1.0);

    double alpha(double t) const { return kind == ScheduleKind::edm ? 1.0 : 1.0 - t; }
    double sigma(double t) const { return t; }
    double alpha_prime(double /*t*/) const { return kind == ScheduleKind::edm ? 0.0 : -1.0; }
    double sigma_prime(double /*t*/) const { return 1.0; }

    // t_min for EDM (sigma = 0 is singular), 0 for FM
    double terminal_time() const { return kind == ScheduleKind::edm ? t_min : 0.0; }
    double log_snr(double t) const;  // log(alpha_t / sigma_t)
    void check_time(double t) const;
};

// Strictly decreasing times t_M > ... > t_0 with t_M == t_max and
// t_0 == terminal time. values is stored in that decreasing order;
// time_at(i) addresses times by the increasing index i (t_0 first).
struct TimeGrid {
    std::vector<double> values;

    std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }  // M
    double time_at(std::size_t i) const { return values.at(values.size() - 1 - i); }
    void validate() const;
};

enum class GridKind { uniform, power };

// x_t = alpha_t * x0 + sigma_t * eps
Array perturb(const Schedule& sched, const Array& x0, const Array& eps, double t);

// v = (alpha' - alpha * sigma'/sigma) * D + (sigma'/sigma) * x
Array denoiser_to_velocity(const Schedule& sched, const Array& d_val, const Array& x, double t);
Array velocity_to_denoiser(const Schedule& sched, const Array& v_val, const Array& x, double t);

TimeGrid time_grid(const Schedule& sched, std::size_t M, GridKind kind);

}  // namespace flowlab
