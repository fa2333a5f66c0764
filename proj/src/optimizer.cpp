#include "flowlab/optimizer.hpp"

#include <cmath>

namespace flowlab {

OptimizerState OptimizerState::sgd(std::size_t n_params, double lr) {
    OptimizerState s;
    s.first_moment = Array(n_params);
    s.second_moment = Array(n_params);
    s.lr = lr;
    s.beta1 = 0.0;
    s.beta2 = 0.0;
    s.eps_stab = 0.0;
    return s;
}

OptimizerState OptimizerState::adam(std::size_t n_params, double lr, double beta1, double beta2,
                                    double eps_stab) {
    OptimizerState s;
    s.first_moment = Array(n_params);
    s.second_moment = Array(n_params);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps_stab = eps_stab;
    return s;
}

void OptimizerState::validate(const NetParams& params) const {
    if (first_moment.size() != params.values.size() ||
        second_moment.size() != params.values.size())
        throw ShapeError("optimizer moment arrays do not match parameter count");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw DomainError("betas must lie in [0, 1)");
}

std::pair<NetParams, OptimizerState> optimizer_step(const NetParams& params, const Array& grads,
                                                    const OptimizerState& state) {
    state.validate(params);
    check_same_size(grads, params.values, "optimizer_step");
    long bad = grads.first_nonfinite();
    if (bad >= 0) throw NumericError("gradient is not finite", bad);

    NetParams out = params;
    OptimizerState st = state;
    st.step_count += 1;
    const bool adaptive = (st.beta2 > 0.0 || st.eps_stab > 0.0);
    const double k = static_cast<double>(st.step_count);
    const double bc1 = 1.0 - std::pow(st.beta1, k);
    const double bc2 = 1.0 - std::pow(st.beta2, k);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        double g = grads.data[i];
        double m = st.beta1 * st.first_moment.data[i] + (1.0 - st.beta1) * g;
        double v = st.beta2 * st.second_moment.data[i] + (1.0 - st.beta2) * g * g;
        st.first_moment.data[i] = m;
        st.second_moment.data[i] = v;
        double mhat = m / bc1;
        double update = mhat;
        if (adaptive) {
            double vhat = v / bc2;
            update = mhat / (std::sqrt(vhat) + st.eps_stab);
        }
        out.values.data[i] -= st.lr * update;
    }
    return {std::move(out), std::move(st)};
}

}  // namespace flowlab
