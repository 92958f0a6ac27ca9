#include "awcol/adam.hpp"

#include <cmath>

#include "awcol/errors.hpp"

namespace awcol {

AdamState make_adam(const EncoderParams& params, double learning_rate) {
    AdamState s;
    s.first_moment = Gradients::zeros_like(params);
    s.second_moment = Gradients::zeros_like(params);
    s.learning_rate = learning_rate;
    return s;
}

void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state) {
    if (!congruent(params.layers, grads.layers) ||
        !congruent(params.layers, state.first_moment.layers) ||
        !congruent(params.layers, state.second_moment.layers)) {
        throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
    }
    if (!(state.beta1 > 0.0 && state.beta1 < 1.0 && state.beta2 > 0.0 && state.beta2 < 1.0)) {
        throw ConfigError("adam_step: betas must lie in (0, 1)");
    }
    state.step += 1;
    const double t = double(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);

    auto p = param_blocks(params.layers);
    auto g = param_blocks(grads.layers);
    auto m = param_blocks(state.first_moment.layers);
    auto v = param_blocks(state.second_moment.layers);
    for (std::size_t b = 0; b < p.size(); ++b) {
        for (std::size_t i = 0; i < p[b].size(); ++i) {
            const double gi = g[b][i];
            m[b][i] = state.beta1 * m[b][i] + (1.0 - state.beta1) * gi;
            v[b][i] = state.beta2 * v[b][i] + (1.0 - state.beta2) * gi * gi;
            const double m_hat = m[b][i] / c1;
            const double v_hat = v[b][i] / c2;
            p[b][i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

}  // namespace awcol
