#pragma once

// Parameterized layers: convolutions, normalization, attention.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "tfunet/ops.hpp"
#include "tfunet/tensor.hpp"

namespace tfunet::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using NamedTensors = std::vector<NamedTensor>;

using Rng = std::mt19937_64;

// Uniform in [-bound, bound], parameter tensor (requires_grad).
Tensor uniform_param(Shape shape, double bound, Rng& rng);

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng);

  Tensor forward(const Tensor& x) const { return conv1d(x, weight, &bias, stride, padding); }
  void collect(const std::string& prefix, NamedTensors& out) const;

  Tensor weight;  // Cout x Cin x K
  Tensor bias;    // Cout
  std::size_t stride = 1;
  std::size_t padding = 0;
};

class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, Rng& rng);

  Tensor forward(const Tensor& x) const { return conv_transpose1d(x, weight, &bias, stride); }
  void collect(const std::string& prefix, NamedTensors& out) const;

  Tensor weight;  // Cin x Cout x K
  Tensor bias;    // Cout
  std::size_t stride = 1;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
  void collect(const std::string& prefix, NamedTensors& out) const;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const;

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, NamedTensors& out) const;

  Tensor gamma, beta;
  double eps = 1e-5;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias.defined() ? &bias : nullptr); }
  void collect(const std::string& prefix, NamedTensors& out) const;

  Tensor weight;  // in x out
  Tensor bias;    // out, may be undefined
};

// Scaled dot-product attention over H heads; Q/K/V/O projections without bias.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(std::size_t dim, std::size_t heads, Rng& rng);

  // x: B x T x d or T x d. If `weights` is given it receives the
  // (B*H) x T x T attention matrix.
  Tensor forward(const Tensor& x, Tensor* weights = nullptr) const;
  void collect(const std::string& prefix, NamedTensors& out) const;

  std::size_t dim = 0;
  std::size_t heads = 1;
  Linear q, k, v, o;
};

// Linear(d -> d_ff) -> ReLU -> Linear(d_ff -> d).
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x) const { return down.forward(relu(up.forward(x))); }
  void collect(const std::string& prefix, NamedTensors& out) const;

  Linear up, down;
};

// Post-norm encoder layer: u = LN(x + MHSA(x)); y = LN(u + FFN(u)).
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(std::size_t dim, std::size_t heads, std::size_t ff_hidden, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;

  MultiHeadSelfAttention attention;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;
};

// Fixed sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)), PE[t, 2i+1] = cos(...).
Tensor positional_encoding(std::size_t tokens, std::size_t dim);

// (Conv k3 p1 -> BN -> ReLU) x 2.
class DoubleConv {
 public:
  DoubleConv() = default;
  DoubleConv(std::size_t in_channels, std::size_t out_channels, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, NamedTensors& out) const;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const;

  Conv1d conv1, conv2;
  BatchNorm1d bn1, bn2;
};

}  // namespace tfunet::nn
