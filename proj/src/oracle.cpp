#include "flowlab/oracle.hpp"

#include <cmath>

namespace flowlab {

void GmmSpec::validate() const {
    if (weights.empty() || weights.size() != means.size())
        throw ShapeError("mixture weights/means mismatch");
    double s = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw DomainError("mixture weights must be nonnegative");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DomainError("mixture weights must sum to 1");
    if (!(variance > 0.0)) throw DomainError("mixture variance must be positive");
    for (const Array& m : means)
        if (m.size() != dim()) throw ShapeError("mixture means have inconsistent dims");
}

GmmSpec GmmSpec::single(Array mean, double variance) {
    GmmSpec g;
    g.weights = {1.0};
    g.means = {std::move(mean)};
    g.variance = variance;
    g.validate();
    return g;
}

GmmSpec GmmSpec::symmetric_pair(double mu, double variance) {
    GmmSpec g;
    g.weights = {0.5, 0.5};
    g.means = {Array{mu}, Array{-mu}};
    g.variance = variance;
    g.validate();
    return g;
}

namespace {

// responsibilities r_j of components given x_t, via log-sum-exp
std::vector<double> responsibilities(const GmmSpec& gmm, double alpha, double s2, const Array& x) {
    std::size_t J = gmm.weights.size();
    std::vector<double> logits(J);
    double lmax = -1e300;
    for (std::size_t j = 0; j < J; ++j) {
        double dist2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double d = x.data[i] - alpha * gmm.means[j].data[i];
            dist2 += d * d;
        }
        logits[j] = std::log(gmm.weights[j]) - 0.5 * dist2 / s2;
        lmax = std::max(lmax, logits[j]);
    }
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - lmax);
        z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
}

}  // namespace

Array posterior_mean(const GmmSpec& gmm, const Schedule& sched, const Array& x, double t) {
    gmm.validate();
    sched.check_time(t);
    if (x.size() != gmm.dim()) throw ShapeError("posterior_mean: x/mixture dim mismatch");
    double a = sched.alpha(t), sg = sched.sigma(t);
    double s2 = a * a * gmm.variance + sg * sg;
    std::vector<double> r = responsibilities(gmm, a, s2, x);
    double shrink = a * gmm.variance / s2;
    Array out(x.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            double mu = gmm.means[j].data[i];
            out.data[i] += r[j] * (mu + shrink * (x.data[i] - a * mu));
        }
    }
    return out;
}

Array analytic_velocity(const GmmSpec& gmm, const Schedule& sched, const Array& x, double t) {
    sched.check_time(t);
    double a = sched.alpha(t), sg = sched.sigma(t);
    double ap = sched.alpha_prime(t), sp = sched.sigma_prime(t);
    double s2 = a * a * gmm.variance + sg * sg;
    std::vector<double> r = responsibilities(gmm, a, s2, x);
    // v = a' mu_bar + [(a' a var + s' s)/s2] (x - a mu_bar); removable
    // singularity of the D <-> v conversion at sigma = 0 already taken
    Array mu_bar(x.size());
    for (std::size_t j = 0; j < r.size(); ++j) axpy(r[j], gmm.means[j], mu_bar);
    double coeff = (ap * a * gmm.variance + sp * sg) / s2;
    Array out = ap * mu_bar;
    for (std::size_t i = 0; i < x.size(); ++i)
        out.data[i] += coeff * (x.data[i] - a * mu_bar.data[i]);
    return out;
}

DriftModel analytic_drift(const GmmSpec& gmm, const Schedule& sched) {
    gmm.validate();
    return DriftModel{[gmm, sched](const Array& x, double t) {
                          return analytic_velocity(gmm, sched, x, t);
                      },
                      DriftSource::analytic_oracle};
}

Array sample_gmm(const GmmSpec& gmm, RngState& rng) {
    double u = rng.next_uniform();
    std::size_t pick = gmm.weights.size() - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < gmm.weights.size(); ++j) {
        acc += gmm.weights[j];
        if (u <= acc) {
            pick = j;
            break;
        }
    }
    Array x = gaussian(rng, gmm.dim());
    double sd = std::sqrt(gmm.variance);
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data[i] = gmm.means[pick].data[i] + sd * x.data[i];
    return x;
}

Array sample_diffused(const GmmSpec& gmm, const Schedule& sched, double t, RngState& rng,
                      double var_scale) {
    sched.check_time(t);
    double a = sched.alpha(t), sg = sched.sigma(t);
    double comp_var = var_scale * (a * a * gmm.variance + sg * sg);
    double u = rng.next_uniform();
    std::size_t pick = gmm.weights.size() - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < gmm.weights.size(); ++j) {
        acc += gmm.weights[j];
        if (u <= acc) {
            pick = j;
            break;
        }
    }
    Array x = gaussian(rng, gmm.dim());
    double sd = std::sqrt(comp_var);
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data[i] = a * gmm.means[pick].data[i] + sd * x.data[i];
    return x;
}

ReferenceFlow ReferenceFlow::for_gmm(const GmmSpec& gmm, const Schedule& sched,
                                     std::size_t fine_grid_M, Method method) {
    ReferenceFlow ref;
    ref.drift = analytic_drift(gmm, sched);
    ref.sched = sched;
    ref.fine_grid_M = fine_grid_M;
    ref.method = method;
    return ref;
}

namespace {

Array rk4_step(const DriftModel& drift, const Array& x, double t, double s) {
    double h = s - t;
    Array k1 = drift(x, t);
    Array x2 = x;
    axpy(0.5 * h, k1, x2);
    Array k2 = drift(x2, t + 0.5 * h);
    Array x3 = x;
    axpy(0.5 * h, k2, x3);
    Array k3 = drift(x3, t + 0.5 * h);
    Array x4 = x;
    axpy(h, k3, x4);
    Array k4 = drift(x4, s);
    Array out = x;
    axpy(h / 6.0, k1, out);
    axpy(h / 3.0, k2, out);
    axpy(h / 3.0, k3, out);
    axpy(h / 6.0, k4, out);
    return out;
}

}  // namespace

Array reference_flow_map(const ReferenceFlow& ref, const Array& x, double t, double s) {
    ref.sched.check_time(t);
    ref.sched.check_time(s);
    if (t == s) return x;
    double full = ref.sched.t_max - ref.sched.terminal_time();
    auto wanted = static_cast<std::size_t>(
        std::ceil(static_cast<double>(ref.fine_grid_M) * std::abs(t - s) / full));
    std::size_t M = std::max<std::size_t>(16, wanted);
    Array cur = x;
    for (std::size_t k = 0; k < M; ++k) {
        double u = t + (s - t) * static_cast<double>(k) / static_cast<double>(M);
        double w = t + (s - t) * static_cast<double>(k + 1) / static_cast<double>(M);
        if (k + 1 == M) w = s;
        cur = ref.method == ReferenceFlow::Method::rk4 ? rk4_step(ref.drift, cur, u, w)
                                                       : heun_step(ref.drift, cur, u, w);
    }
    return cur;
}

namespace {

McEstimate estimate(const std::vector<double>& values) {
    McEstimate e;
    e.n = values.size();
    if (values.empty()) return e;
    double s = 0.0;
    for (double v : values) s += v;
    e.mean = s / static_cast<double>(e.n);
    if (e.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - e.mean) * (v - e.mean);
        e.stderr_ = std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
    }
    return e;
}

}  // namespace

McEstimate oracle_cm_loss(const ConsistencyHead& head, const ReferenceFlow& ref,
                          const std::vector<std::pair<double, Array>>& batch) {
    double terminal = ref.sched.terminal_time();
    std::vector<double> values;
    values.reserve(batch.size());
    for (const auto& [t, x_t] : batch) {
        Array target = reference_flow_map(ref, x_t, t, terminal);
        values.push_back(squared_norm(consistency_eval(head, x_t, t) - target));
    }
    return estimate(values);
}

McEstimate oracle_cm_loss_reverse(const ConsistencyHead& head, const ReferenceFlow& ref,
                                  const std::vector<std::pair<double, Array>>& batch) {
    double terminal = ref.sched.terminal_time();
    double T = ref.sched.t_max;
    std::vector<double> values;
    values.reserve(batch.size());
    for (const auto& [t, x_T] : batch) {
        Array x_t = reference_flow_map(ref, x_T, T, t);
        Array target = reference_flow_map(ref, x_t, t, terminal);  // = Psi_{T->terminal}(x_T)
        values.push_back(squared_norm(consistency_eval(head, x_t, t) - target));
    }
    return estimate(values);
}

std::vector<std::pair<double, Array>> sample_marginal_batch(const GmmSpec& gmm,
                                                            const Schedule& sched, std::size_t n,
                                                            RngState& rng) {
    std::vector<std::pair<double, Array>> batch;
    batch.reserve(n);
    double lo = sched.terminal_time(), hi = sched.t_max;
    for (std::size_t i = 0; i < n; ++i) {
        double t = lo + (hi - lo) * rng.next_uniform();
        Array x0 = sample_gmm(gmm, rng);
        Array eps = gaussian(rng, gmm.dim());
        batch.emplace_back(t, perturb(sched, x0, eps, t));
    }
    return batch;
}

std::vector<std::pair<double, Array>> sample_prior_batch(const GmmSpec& gmm, const Schedule& sched,
                                                         std::size_t n, RngState& rng,
                                                         double var_scale) {
    std::vector<std::pair<double, Array>> batch;
    batch.reserve(n);
    double lo = sched.terminal_time(), hi = sched.t_max;
    for (std::size_t i = 0; i < n; ++i) {
        double t = lo + (hi - lo) * rng.next_uniform();
        batch.emplace_back(t, sample_diffused(gmm, sched, sched.t_max, rng, var_scale));
    }
    return batch;
}

}  // namespace flowlab
