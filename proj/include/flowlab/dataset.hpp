#pragma once

#include "flowlab/oracle.hpp"

namespace flowlab {

// Synthetic data sources for the training pipeline. GMM datasets also carry
// an analytic oracle; two-moons is sampling-only.
struct Dataset {
    enum class Kind { gmm, two_moons };
    Kind kind = Kind::gmm;
    GmmSpec gmm;
    double moons_noise = 0.05;
    double moons_scale = 0.6;

    std::size_t dim() const { return kind == Kind::gmm ? gmm.dim() : 2; }
    bool has_oracle() const { return kind == Kind::gmm; }
    Array draw(RngState& rng) const;

    static Dataset gaussian1d(double mean = 0.0, double variance = 1.0);
    static Dataset gmm1d(double mu, double variance);
    static Dataset two_moons(double noise = 0.05, double scale = 0.6);
};

// x_T for trajectory anchors / 1-step sampling: the exact diffused marginal
// for GMM data, N(0, sigma_T^2 I) otherwise (FM: exactly N(0, I) at t=1).
Array sample_prior(const Dataset& data, const Schedule& sched, RngState& rng);

}  // namespace flowlab
