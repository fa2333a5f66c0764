#pragma once

#include "flowlab/mlp.hpp"

namespace flowlab {

// Adaptive-moment optimizer with a plain-SGD degenerate mode: when
// beta2 == 0 and eps_stab == 0 the second-moment scaling is disabled and the
// update is theta <- theta - lr * mhat (pure SGD for beta1 == 0).
struct OptimizerState {
    Array first_moment;
    Array second_moment;
    long long step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_stab = 1e-8;

    static OptimizerState sgd(std::size_t n_params, double lr);
    static OptimizerState adam(std::size_t n_params, double lr, double beta1 = 0.9,
                               double beta2 = 0.999, double eps_stab = 1e-8);

    void validate(const NetParams& params) const;
};

std::pair<NetParams, OptimizerState> optimizer_step(const NetParams& params, const Array& grads,
                                                    const OptimizerState& state);

}  // namespace flowlab
