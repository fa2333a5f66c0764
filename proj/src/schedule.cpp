#include "flowlab/schedule.hpp"

#include <cmath>

namespace flowlab {

Schedule Schedule::edm(double t_min, double t_max, double rho) {
    if (!(t_min > 0.0) || !(t_max > t_min)) throw DomainError("EDM needs 0 < t_min < t_max");
    Schedule s;
    s.kind = ScheduleKind::edm;
    s.t_min = t_min;
    s.t_max = t_max;
    s.rho = rho;
    return s;
}

Schedule Schedule::fm(double t_max) {
    if (!(t_max > 0.0) || t_max > 1.0) throw DomainError("FM needs t_max in (0, 1]");
    Schedule s;
    s.kind = ScheduleKind::fm;
    s.t_min = 0.0;
    s.t_max = t_max;
    s.rho = 7.0;
    return s;
}

double Schedule::log_snr(double t) const {
    double a = alpha(t), s = sigma(t);
    if (!(s > 0.0) || !(a > 0.0)) throw SingularityError("log_snr undefined at t=" + std::to_string(t));
    return std::log(a / s);
}

void Schedule::check_time(double t) const {
    double lo = kind == ScheduleKind::edm ? t_min : 0.0;
    if (t < lo - 1e-12 || t > t_max + 1e-12)
        throw DomainError("t=" + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(t_max) + "]");
}

void TimeGrid::validate() const {
    if (values.size() < 2) throw DomainError("time grid needs at least two points");
    for (std::size_t k = 0; k + 1 < values.size(); ++k)
        if (!(values[k] > values[k + 1])) throw DomainError("time grid must be strictly decreasing");
}

Array perturb(const Schedule& sched, const Array& x0, const Array& eps, double t) {
    sched.check_time(t);
    check_same_size(x0, eps, "perturb");
    Array out = sched.alpha(t) * x0;
    axpy(sched.sigma(t), eps, out);
    return out;
}

Array denoiser_to_velocity(const Schedule& sched, const Array& d_val, const Array& x, double t) {
    double s = sched.sigma(t);
    if (!(s > 0.0)) throw SingularityError("sigma(t) = 0 at t=" + std::to_string(t));
    check_same_size(d_val, x, "denoiser_to_velocity");
    double ratio = sched.sigma_prime(t) / s;
    double coeff = sched.alpha_prime(t) - sched.alpha(t) * ratio;
    Array out = coeff * d_val;
    axpy(ratio, x, out);
    return out;
}

Array velocity_to_denoiser(const Schedule& sched, const Array& v_val, const Array& x, double t) {
    double s = sched.sigma(t);
    if (!(s > 0.0)) throw SingularityError("sigma(t) = 0 at t=" + std::to_string(t));
    double ratio = sched.sigma_prime(t) / s;
    double coeff = sched.alpha_prime(t) - sched.alpha(t) * ratio;
    if (std::abs(coeff) < 1e-300)
        throw SingularityError("degenerate conversion coefficient at t=" + std::to_string(t));
    check_same_size(v_val, x, "velocity_to_denoiser");
    Array out = (1.0 / coeff) * v_val;
    axpy(-ratio / coeff, x, out);
    return out;
}

TimeGrid time_grid(const Schedule& sched, std::size_t M, GridKind kind) {
    if (M == 0) throw DomainError("time grid needs M >= 1");
    double t0 = sched.terminal_time();
    double tM = sched.t_max;
    TimeGrid grid;
    grid.values.resize(M + 1);
    if (kind == GridKind::uniform) {
        for (std::size_t k = 0; k <= M; ++k) {
            double frac = static_cast<double>(k) / static_cast<double>(M);
            grid.values[k] = tM + frac * (t0 - tM);
        }
    } else {
        double inv_rho = 1.0 / sched.rho;
        double a = std::pow(tM, inv_rho);
        double b = std::pow(t0, inv_rho);
        // values[k] holds t_{M-k}: t_i = (tM^{1/rho} + (1 - i/M)(t0^{1/rho} - tM^{1/rho}))^rho
        for (std::size_t k = 0; k <= M; ++k) {
            double frac = static_cast<double>(k) / static_cast<double>(M);  // 1 - i/M
            grid.values[k] = std::pow(a + frac * (b - a), sched.rho);
        }
    }
    grid.values.front() = tM;  // endpoints exact
    grid.values.back() = t0;
    grid.validate();
    return grid;
}

}  // namespace flowlab
