#pragma once

#include <optional>
#include <vector>

#include "survmamba/autograd.hpp"

// Differentiable primitives over Tape variables. Every op records its own
// backward rule; shapes are checked eagerly and reported as DimensionError.
//
// Sequence tensors are laid out as [..., M, C]: the second-to-last axis is
// the token (sequence) axis and the last axis is the channel axis.

namespace survmamba {

// y[..., j] = sum_i x[..., i] * w[i, j] + b[j]
Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);

Var sigmoid(Var x);
Var silu(Var x);
// ln(1 + e^x), overflow-safe.
Var softplus(Var x);
// -exp(x); maps an unconstrained log-parameter to a strictly negative value.
Var neg_exp(Var x);

// Per-row normalization over the last axis with population variance.
Var layer_norm(Var x, Var gamma, Var beta, double eps);

// x: [B, M, E], kernel: [E, W], bias: [E]. Left zero-padding of W-1, so the
// output at t reads x at t-W+1 .. t only.
Var causal_depthwise_conv1d(Var x, Var kernel, Var bias);

// Reverses the token axis.
Var reverse_tokens(Var x);
// Concatenates along the channel (last) axis; shapes must agree elsewhere.
Var concat_channels(Var a, Var b);
// Concatenates 2-D [K_i, D] blocks along the row axis.
Var concat_rows(const std::vector<Var>& parts);
// Stacks 1-D [D] vectors into [G, D].
Var stack_rows(const std::vector<Var>& rows);
// Row slice [begin, end) of a 2-D tensor.
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);

// Mean / max over the token axis: [..., M, D] -> [..., D].
Var mean_tokens(Var x);
Var max_tokens(Var x);

// [L_in, D] -> [L, D] by averaging contiguous segments. With
// L_in = q*L + r the first r segments hold q+1 rows and the rest q.
Var segment_mean(Var x, std::size_t length);
// Segment sizes used by segment_mean.
std::vector<std::size_t> segment_sizes(std::size_t input_length, std::size_t length);

Var sum(Var x);
// sum_i x[i] * weights[i]; weights are constant.
Var weighted_sum(Var x, const Tensor& weights);

}  // namespace survmamba
