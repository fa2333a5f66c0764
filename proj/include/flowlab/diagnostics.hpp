#pragma once

#include "flowlab/oracle.hpp"
#include "flowlab/training.hpp"

namespace flowlab {

// Monte-Carlo estimates of the gradient bias B, variance V and oracle-relative
// MSE E of a surrogate loss gradient at fixed parameters.
struct GradStats {
    double bias_sq = 0.0;
    double variance = 0.0;
    double mse = 0.0;
    std::size_t n_samples = 0;
    double stderr_bias = 0.0;
    double stderr_var = 0.0;
    double stderr_mse = 0.0;
};

// One training sample xi = (t, x0, eps); x_t = perturb(x0, eps, t). Carrying
// the generating pair keeps the CT surrogate and the oracle on common random
// numbers.
struct XiSample {
    double t = 0.0;
    Array x0, eps;
};
using XiSampler = std::function<XiSample(RngState&)>;
using PerSampleGrad = std::function<Array(const NetParams&, const XiSample&)>;

// xi sampler for a GMM testbed: t uniform on [t_lo, T], data from the mixture
XiSampler gmm_xi_sampler(const GmmSpec& gmm, const Schedule& sched, double t_lo);

// per-sample gradient of the CM surrogate || f(x_t,t) - f_(theta-)(x_{t-dt}, t-dt) ||^2
PerSampleGrad cm_surrogate_grad(const Schedule& sched, double sigma_data, double delta_t);
// per-sample gradient of the oracle loss || f(x_t,t) - Psi_{t->terminal}(x_t) ||^2
PerSampleGrad oracle_loss_grad(const Schedule& sched, double sigma_data, const ReferenceFlow& ref);

// B = || E[g_surrogate] - E[g_oracle] ||^2 over n common samples, with a
// jackknife standard error. Refuses n < 100.
GradStats grad_bias(const PerSampleGrad& surrogate, const PerSampleGrad& oracle,
                    const XiSampler& xi, const NetParams& params, std::size_t n, RngState rng);

// V = (1/n) sum ||g_i||^2 - ||gbar||^2 with jackknife stderr
GradStats grad_variance(const PerSampleGrad& surrogate, const XiSampler& xi,
                        const NetParams& params, std::size_t n, RngState rng);

// E = (1/n) sum || g_i - oracle_grad ||^2; oracle_grad is the (estimated)
// expected oracle gradient
GradStats grad_mse(const PerSampleGrad& surrogate, const Array& oracle_grad, const XiSampler& xi,
                   const NetParams& params, std::size_t n, RngState rng);

// expected oracle gradient over n samples (helper for grad_mse)
Array mean_gradient(const PerSampleGrad& grad, const XiSampler& xi, const NetParams& params,
                    std::size_t n, RngState rng);

// ------------------------- init-scheme comparison --------------------------
struct InitScheme {
    std::string name;  // cmt | dm | gcd | random
    NetParams params;
};

struct InitComparison {
    std::string scheme;
    GradStats stats;
    std::vector<std::pair<long long, double>> post_train_curve;  // (step, oracle loss)
    bool diverged = false;
    long long diverged_step = -1;
};

// Runs identical CM post-training from every scheme's parameters (same seed,
// hence the same sample streams) and records the oracle loss on a fixed
// evaluation batch every config.report_every steps. Also fills per-scheme
// GradStats at the initialization.
std::vector<InitComparison> compare_inits(const std::vector<InitScheme>& schemes,
                                          const TrainConfig& post_config,
                                          const ReferenceFlow& ref, std::size_t stats_samples,
                                          std::size_t eval_samples, std::uint64_t eval_seed);

// ----------------------------- solver orders --------------------------------
struct OrderFit {
    double slope = 0.0;
    double r2 = 0.0;
    bool exact = false;  // all errors at rounding level; no slope to fit
};

OrderFit solver_order_fit(SolveMethod method, const DriftModel& drift, const Schedule& sched,
                          const ReferenceFlow& ref, const Array& x, double t, double s,
                          const std::vector<std::size_t>& step_counts,
                          WarmupMode warmup = WarmupMode::heun);

// round-trip error slope over the same family of step counts
OrderFit round_trip_order_fit(SolveMethod method, const DriftModel& drift, const Schedule& sched,
                              const Array& x, double t, double s,
                              const std::vector<std::size_t>& step_counts,
                              WarmupMode warmup = WarmupMode::heun);

// -------------------------- loss-identity checks ---------------------------
// Both sides of the jump-vs-average-drift loss identity
//   (1/t^2) || g - (x + t/(t-s) I) ||^2 == || h - (1/(s-t)) I ||^2
// under the coupling g = x - t h; I is the drift integral over [s, t].
std::pair<double, double> ctm_mf_identity(const Array& g_val, const Array& h_val, const Array& x,
                                          double t, double s, const Array& target_integral);

// ------------------------------ NFE accounting ------------------------------
struct Rational {
    long long num = 0;
    long long den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
};

enum class NfeScheme { cmt, cd, ct };

// Teacher evaluations per trained pair, exact: CMT = 1 + (s-1)(k-1)/M,
// CD = q (cost of its one-step teacher update, passed via s_warm), CT = 0.
Rational nfe_per_pair(std::size_t M, std::size_t k, std::size_t s_warm, NfeScheme scheme);

// ------------------------------ sample metrics ------------------------------
// quantile-coupling transport cost between 1D samples (resampled to a common
// size when they differ)
double wasserstein_1d(const Array& a, const Array& b);

// mean 1D cost over random unit directions
double sliced_w2(const std::vector<Array>& a, const std::vector<Array>& b, std::size_t n_dirs,
                 RngState& rng);

}  // namespace flowlab
