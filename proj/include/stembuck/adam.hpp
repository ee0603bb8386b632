#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stembuck/common.hpp"

namespace stembuck {

// Adam with bias correction, defaults as commonly published.
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t step = 0;
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment

    static AdamState create(size_t n_params, double learning_rate = 1e-3) {
        AdamState s;
        s.learning_rate = learning_rate;
        s.m.assign(n_params, 0.0);
        s.v.assign(n_params, 0.0);
        return s;
    }
};

inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw invalid_input(detail::strfmt("adam_step: shape mismatch (%zu params, %zu grads, %zu moments)",
                                           params.size(), grads.size(), state.m.size()));
    }
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / corr1;
        const double v_hat = state.v[i] / corr2;
        params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

}  // namespace stembuck
