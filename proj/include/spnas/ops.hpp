#pragma once

#include <cstdint>
#include <span>

#include "spnas/tensor.hpp"

// Differentiable operators. Every op takes the recording tape first; outputs
// require gradients exactly when the tape is enabled and some input does.
// Spatial convolutions use zero padding of K/2 per side, so for odd K the
// output extent is ceil(H / stride) and a K x K filter whose outer ring is
// zero behaves exactly like the inner (K-2) x (K-2) filter.
namespace spnas::ops {

/// Dense 2-D convolution: x[N,Cin,H,W] * w[Cout,Cin,K,K] -> [N,Cout,H',W'].
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, int stride);

/// Per-channel convolution: x[N,C,H,W] * w[C,K,K] -> [N,C,H',W'].
Tensor conv2d_depthwise(Tape& tape, const Tensor& x, const Tensor& w, int stride);

/// 1x1 convolution: x[N,Cin,H,W], w[Cout,Cin] -> [N,Cout,H,W].
Tensor conv2d_pointwise(Tape& tape, const Tensor& x, const Tensor& w);

/// y = x * scale[c] (+ bias[c]) on dimension 1. `bias` may be undefined.
Tensor channel_affine(Tape& tape, const Tensor& x, const Tensor& scale, const Tensor& bias);

/// min(max(x, 0), 6); subgradient 0 at both kinks.
Tensor relu6(Tape& tape, const Tensor& x);

/// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(Tape& tape, const Tensor& x);

/// x[N,F] w[O,F] b[O] -> [N,O]. `b` may be undefined.
Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

/// Mean over the batch of -log softmax(logits)[label].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// alpha * x + beta with constant coefficients.
Tensor affine_const(Tape& tape, const Tensor& x, double alpha, double beta);

/// x * s for a scalar tensor s.
Tensor scale(Tape& tape, const Tensor& x, const Tensor& s);

/// Elements where mask != 0 are multiplied by scalar s; the rest pass through.
Tensor scale_masked(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask,
                    const Tensor& s);

Tensor sum(Tape& tape, const Tensor& x);
Tensor sum_sq(Tape& tape, const Tensor& x);
Tensor masked_sum_sq(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask);

/// ln(max(x, floor)) for scalar x; zero gradient on the clamped branch.
Tensor log_floor(Tape& tape, const Tensor& x, double floor);

}  // namespace spnas::ops
