#pragma once

#include <cstdint>

#include "awcol/encoder.hpp"

namespace awcol {

struct AdamState {
    std::uint64_t step = 0;
    Gradients first_moment;
    Gradients second_moment;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Fresh optimizer state with zero moments shaped like `params`.
AdamState make_adam(const EncoderParams& params, double learning_rate = 1e-3);

/// One bias-corrected Adam update of `params` in place.
void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state);

}  // namespace awcol
