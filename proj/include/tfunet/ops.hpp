#pragma once

// Differentiable operations. Every op records a backward rule on the active
// tape when at least one input requires grad.

#include <cstddef>

#include "tfunet/tensor.hpp"

namespace tfunet {

// Elementwise. `b` must match `a` exactly unless noted.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// ReLU with subgradient 0 at the kink.
Tensor relu(const Tensor& a);
// x: B x C x L (or C x L), bias: C. Adds bias[c] along the channel axis.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
// x: B x T x d, table: T x d, constant (never differentiated).
Tensor add_broadcast_batch(const Tensor& x, const Tensor& table);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// a: m x k, b: k x n.
Tensor matmul(const Tensor& a, const Tensor& b);
// a: B x m x k, b: B x k x n.
Tensor bmm(const Tensor& a, const Tensor& b);
// x: ... x in (leading axes flattened), weight: in x out, bias: out (optional).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias);

Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose_last(const Tensor& x);

// a: B x C1 x L, b: B x C2 x L -> B x (C1+C2) x L.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [begin, begin+count) of a B x C x L tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

// Softmax over the last axis.
Tensor softmax_last(const Tensor& x);

// B x T x d -> (B*H) x T x (d/H) and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t heads);

// x: B x Cin x L, weight: Cout x Cin x K, bias: Cout (optional).
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor* bias, std::size_t stride, std::size_t padding);
// x: B x Cin x L, weight: Cin x Cout x K, bias: Cout (optional).
Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor* bias, std::size_t stride);
// Non-overlapping window maxima; gradient goes to the first maximal index.
Tensor maxpool1d(const Tensor& x, std::size_t window);

// Per-channel batch normalization over (batch, length). running_mean and
// running_var are updated in place in training mode only.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps);
// Normalization over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

}  // namespace tfunet
