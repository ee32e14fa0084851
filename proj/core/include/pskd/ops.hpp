#pragma once

#include <vector>

#include "pskd/tensor.hpp"

namespace pskd {

// Probabilities are clamped here before any log or division; prevents
// -inf without measurably biasing losses.
inline constexpr Scalar kProbEps = 1e-12;

// Softening temperature used for soft targets unless configured otherwise.
inline constexpr Scalar kDefaultTemperature = 4.0;

// Row-wise softmax of logits/temperature, stabilized by per-row max
// subtraction. logits: (B, C), temperature > 0.
Tensor softmax_temp(const Tensor& logits, Scalar temperature);
inline Tensor softmax(const Tensor& logits) { return softmax_temp(logits, 1.0); }

// Mean over rows of sum_c p_c * ln(p_c / q_c), with 0*ln(0/q) = 0 and q
// clamped at kProbEps. Rows of p and q must be probability vectors.
Scalar kl_div(const Tensor& p, const Tensor& q);

// Mean over rows of -ln(probs[b, labels[b]]), probabilities clamped.
Scalar cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// Checks that each row of t sums to 1 within tol and entries are >= 0.
bool rows_are_probabilities(const Tensor& t, Scalar tol = 1e-6);

// 1-D convolution over the trailing time axis with same padding.
// x: (B, Cin, T), w: (Cout, Cin, k), bias: (Cout) -> (B, Cout, T).
Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor relu(const Tensor& x);

// (B, C, T) -> (B, C), mean over the time axis.
Tensor global_avg_pool_time(const Tensor& x);

// x: (B, D), w: (D, E), bias: (E) -> (B, E).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

}  // namespace pskd
