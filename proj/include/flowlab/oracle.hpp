#pragma once

#include "flowlab/heads.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/solvers.hpp"

namespace flowlab {

// Isotropic Gaussian mixture; the analytic testbed for everything.
struct GmmSpec {
    std::vector<double> weights;  // simplex
    std::vector<Array> means;
    double variance = 1.0;  // shared per-component isotropic variance

    std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }
    void validate() const;

    static GmmSpec single(Array mean, double variance);
    static GmmSpec symmetric_pair(double mu, double variance);  // 1D +-mu, equal weights
};

// E[x0 | x_t] in closed form (softmax-weighted per-component posteriors)
Array posterior_mean(const GmmSpec& gmm, const Schedule& sched, const Array& x, double t);

// Marginal PF-ODE velocity; finite on the full schedule range including
// sigma = 0 (the generic denoiser conversion has a removable singularity
// there; this uses the stable closed form).
Array analytic_velocity(const GmmSpec& gmm, const Schedule& sched, const Array& x, double t);
DriftModel analytic_drift(const GmmSpec& gmm, const Schedule& sched);

// draw x0 from the mixture (2 * dim counter slots per draw plus one for the
// component pick)
Array sample_gmm(const GmmSpec& gmm, RngState& rng);

// draw from the exact diffused marginal p_t; var_scale != 1 deliberately
// mismatches the variance (negative controls)
Array sample_diffused(const GmmSpec& gmm, const Schedule& sched, double t, RngState& rng,
                      double var_scale = 1.0);

// High-resolution integrator standing in for the exact flow map.
struct ReferenceFlow {
    DriftModel drift;
    Schedule sched;
    std::size_t fine_grid_M = 4096;  // steps across the full schedule range
    enum class Method { heun, rk4 } method = Method::rk4;

    static ReferenceFlow for_gmm(const GmmSpec& gmm, const Schedule& sched,
                                 std::size_t fine_grid_M = 4096, Method method = Method::rk4);
};

Array reference_flow_map(const ReferenceFlow& ref, const Array& x, double t, double s);

struct McEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

// Monte-Carlo estimate of E[ || f(x_t, t) - Psi_{t->terminal}(x_t) ||^2 ]
// over a batch of (t, x_t) pairs drawn from the marginals.
McEstimate oracle_cm_loss(const ConsistencyHead& head, const ReferenceFlow& ref,
                          const std::vector<std::pair<double, Array>>& batch);

// Reverse-time form over (t, x_T) pairs with x_T from the prior:
// E[ || f(Psi_{T->t}(x_T), t) - Psi_{T->terminal}(x_T) ||^2 ].
McEstimate oracle_cm_loss_reverse(const ConsistencyHead& head, const ReferenceFlow& ref,
                                  const std::vector<std::pair<double, Array>>& batch);

// batch builders for the two estimators
std::vector<std::pair<double, Array>> sample_marginal_batch(const GmmSpec& gmm,
                                                            const Schedule& sched, std::size_t n,
                                                            RngState& rng);
std::vector<std::pair<double, Array>> sample_prior_batch(const GmmSpec& gmm, const Schedule& sched,
                                                         std::size_t n, RngState& rng,
                                                         double var_scale = 1.0);

}  // namespace flowlab
