#pragma once

#include <cstdint>
#include <vector>

#include "pskd/tensor.hpp"

namespace pskd {

struct AdamConfig {
    Scalar lr = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
    // Round parameters to the nearest 32-bit float after each update;
    // how training runs opt into 32-bit parameter precision.
    bool f32_params = false;
};

// Bias-corrected adaptive-moment state. A pure function of its inputs:
// replaying (state, params, grads) reproduces outputs bit-exactly.
struct AdamState {
    AdamConfig cfg;
    std::int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

AdamState make_adam(const std::vector<Tensor>& params, AdamConfig cfg);

// Applies one update in place. NaN/Inf gradients refuse the whole step
// (state and params untouched) with a NumericError.
void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads);

}  // namespace pskd
