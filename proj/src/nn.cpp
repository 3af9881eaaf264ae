#include "tfunet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tfunet::nn {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride_,
               std::size_t padding_, Rng& rng)
    : stride(stride_), padding(padding_) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_channels * kernel));
  weight = uniform_param({out_channels, in_channels, kernel}, bound, rng);
  bias = uniform_param({out_channels}, bound, rng);
}

void Conv1d::collect(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ConvTranspose1d::ConvTranspose1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                 std::size_t stride_, Rng& rng)
    : stride(stride_) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_channels * kernel));
  weight = uniform_param({in_channels, out_channels, kernel}, bound, rng);
  bias = uniform_param({out_channels}, bound, rng);
}

void ConvTranspose1d::collect(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BatchNorm1d::BatchNorm1d(std::size_t channels, double momentum_, double eps_)
    : gamma(Tensor::full({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::full({channels}, 1.0)),
      momentum(momentum_),
      eps(eps_) {}

void BatchNorm1d::collect(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNorm1d::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

LayerNorm::LayerNorm(std::size_t dim, double eps_)
    : gamma(Tensor::full({dim}, 1.0, true)), beta(Tensor::zeros({dim}, true)), eps(eps_) {}

void LayerNorm::collect(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Linear::Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  weight = uniform_param({in, out}, bound, rng);
  if (with_bias) bias = uniform_param({out}, bound, rng);
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

MultiHeadSelfAttention::MultiHeadSelfAttention(std::size_t dim_, std::size_t heads_, Rng& rng)
    : dim(dim_), heads(heads_) {
  if (heads == 0 || dim % heads != 0)
    throw std::invalid_argument("attention dim " + std::to_string(dim) + " not divisible by " +
                                std::to_string(heads) + " heads");
  q = Linear(dim, dim, false, rng);
  k = Linear(dim, dim, false, rng);
  v = Linear(dim, dim, false, rng);
  o = Linear(dim, dim, false, rng);
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, Tensor* weights) const {
  if (x.rank() == 2) {
    Tensor y = forward(reshape(x, {1, x.dim(0), x.dim(1)}), weights);
    return reshape(y, x.shape());
  }
  if (x.rank() != 3 || x.dim(2) != dim) throw ShapeError("attention input", x.shape(), {0, 0, dim});
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dim / heads));
  Tensor qh = split_heads(q.forward(x), heads);
  Tensor kh = split_heads(k.forward(x), heads);
  Tensor vh = split_heads(v.forward(x), heads);
  Tensor scores = scale(bmm(qh, transpose_last(kh)), inv_sqrt_dh);
  Tensor attn = softmax_last(scores);
  if (weights) *weights = attn;
  return o.forward(merge_heads(bmm(attn, vh), heads));
}

void MultiHeadSelfAttention::collect(const std::string& prefix, NamedTensors& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, Rng& rng)
    : up(dim, hidden, true, rng), down(hidden, dim, true, rng) {}

void FeedForward::collect(const std::string& prefix, NamedTensors& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

TransformerEncoderLayer::TransformerEncoderLayer(std::size_t dim, std::size_t heads, std::size_t ff_hidden, Rng& rng)
    : attention(dim, heads, rng), norm1(dim), ffn(dim, ff_hidden, rng), norm2(dim) {}

Tensor TransformerEncoderLayer::forward(const Tensor& x) const {
  Tensor u = norm1.forward(add(x, attention.forward(x)));
  return norm2.forward(add(u, ffn.forward(u)));
}

void TransformerEncoderLayer::collect(const std::string& prefix, NamedTensors& out) const {
  attention.collect(prefix + ".attn", out);
  norm1.collect(prefix + ".norm1", out);
  ffn.collect(prefix + ".ffn", out);
  norm2.collect(prefix + ".norm2", out);
}

Tensor positional_encoding(std::size_t tokens, std::size_t dim) {
  if (tokens == 0 || dim == 0) throw std::invalid_argument("positional encoding needs tokens, dim >= 1");
  if (dim % 2 != 0) throw std::invalid_argument("positional encoding dim must be even, got " + std::to_string(dim));
  Tensor pe = Tensor::zeros({tokens, dim});
  for (std::size_t t = 0; t < tokens; ++t)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double a = static_cast<double>(t) / freq;
      pe[t * dim + 2 * i] = std::sin(a);
      pe[t * dim + 2 * i + 1] = std::cos(a);
    }
  return pe;
}

DoubleConv::DoubleConv(std::size_t in_channels, std::size_t out_channels, Rng& rng)
    : conv1(in_channels, out_channels, 3, 1, 1, rng),
      conv2(out_channels, out_channels, 3, 1, 1, rng),
      bn1(out_channels),
      bn2(out_channels) {}

Tensor DoubleConv::forward(const Tensor& x, bool training) {
  Tensor h = relu(bn1.forward(conv1.forward(x), training));
  return relu(bn2.forward(conv2.forward(h), training));
}

void DoubleConv::collect(const std::string& prefix, NamedTensors& out) const {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
}

void DoubleConv::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  bn1.collect_buffers(prefix + ".bn1", out);
  bn2.collect_buffers(prefix + ".bn2", out);
}

}  // namespace tfunet::nn
