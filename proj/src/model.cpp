#include "tfunet/model.hpp"

#include <stdexcept>

namespace tfunet {

void ModelConfig::validate() const {
  if (base_channels == 0) throw std::invalid_argument("base_channels must be positive");
  if (in_channels != 1 || out_channels != 1) throw std::invalid_argument("only single-lead (1 channel) input/output");
  if (input_len == 0 || input_len % (std::size_t{1} << depth) != 0)
    throw std::invalid_argument("input_len " + std::to_string(input_len) + " must be a positive multiple of " +
                                std::to_string(std::size_t{1} << depth));
  if (heads == 0 || bottleneck_dim() % heads != 0)
    throw std::invalid_argument("bottleneck dim " + std::to_string(bottleneck_dim()) + " not divisible by " +
                                std::to_string(heads) + " heads");
  if (d_ff_ratio == 0) throw std::invalid_argument("d_ff_ratio must be positive");
}

namespace {

std::size_t conv_params(std::size_t cin, std::size_t cout, std::size_t k) { return cout * cin * k + cout; }
std::size_t double_conv_params(std::size_t cin, std::size_t cout) {
  return conv_params(cin, cout, 3) + 2 * cout + conv_params(cout, cout, 3) + 2 * cout;
}

}  // namespace

std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t c = cfg.base_channels;
  std::size_t total = double_conv_params(cfg.in_channels, c);
  for (std::size_t i = 0; i < ModelConfig::depth; ++i) total += double_conv_params(c << i, c << (i + 1));
  const std::size_t d = cfg.bottleneck_dim(), ff = d * cfg.d_ff_ratio;
  const std::size_t layer = 4 * d * d + (d * ff + ff) + (ff * d + d) + 4 * d;
  total += cfg.transformer_layers * layer;
  for (std::size_t i = ModelConfig::depth; i-- > 0;) {
    const std::size_t cin = c << (i + 1), cout = c << i;
    total += cin * cout * 2 + cout;            // transposed conv k=2
    total += double_conv_params(2 * cout, cout);
  }
  total += conv_params(c, cfg.out_channels, 1);
  return total;
}

TFTransUNet1D::TFTransUNet1D(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(cfg_.seed);
  const std::size_t c = cfg_.base_channels;
  inc_ = nn::DoubleConv(cfg_.in_channels, c, rng);
  for (std::size_t i = 0; i < ModelConfig::depth; ++i) downs_[i] = nn::DoubleConv(c << i, c << (i + 1), rng);

  const std::size_t d = cfg_.bottleneck_dim();
  pos_enc_ = nn::positional_encoding(cfg_.bottleneck_len(), d);
  for (std::size_t n = 0; n < cfg_.transformer_layers; ++n)
    encoder_.emplace_back(d, cfg_.heads, d * cfg_.d_ff_ratio, rng);

  // ups_[0] is U1 (deepest).
  for (std::size_t j = 0; j < ModelConfig::depth; ++j) {
    const std::size_t level = ModelConfig::depth - 1 - j;
    const std::size_t cin = c << (level + 1), cout = c << level;
    ups_[j].up = nn::ConvTranspose1d(cin, cout, 2, 2, rng);
    ups_[j].conv = nn::DoubleConv(2 * cout, cout, rng);
  }
  out_conv_ = nn::Conv1d(c, cfg_.out_channels, 1, 1, 0, rng);
}

Tensor TFTransUNet1D::forward(const Tensor& x, bool training) {
  if (x.rank() != 3 || x.dim(1) != cfg_.in_channels || x.dim(2) != cfg_.input_len)
    throw ShapeError("model input", x.shape(), {0, cfg_.in_channels, cfg_.input_len});

  // skips[0] = INC, skips[i] = D_i output.
  std::array<Tensor, ModelConfig::depth + 1> skips;
  skips[0] = inc_.forward(x, training);
  for (std::size_t i = 0; i < ModelConfig::depth; ++i)
    skips[i + 1] = downs_[i].forward(maxpool1d(skips[i], 2), training);

  Tensor h = transpose_last(skips[ModelConfig::depth]);  // B x T x d
  h = add_broadcast_batch(h, pos_enc_);
  for (const auto& layer : encoder_) h = layer.forward(h);
  h = transpose_last(h);  // B x d x T

  for (std::size_t j = 0; j < ModelConfig::depth; ++j) {
    const Tensor& skip = skips[ModelConfig::depth - 1 - j];
    Tensor up = ups_[j].up.forward(h);
    h = ups_[j].conv.forward(concat_channels(skip, up), training);
  }
  return out_conv_.forward(h);
}

nn::NamedTensors TFTransUNet1D::parameters() const {
  nn::NamedTensors out;
  inc_.collect("inc", out);
  for (std::size_t i = 0; i < ModelConfig::depth; ++i) downs_[i].collect("down" + std::to_string(i + 1), out);
  for (std::size_t n = 0; n < encoder_.size(); ++n) encoder_[n].collect("encoder" + std::to_string(n), out);
  for (std::size_t j = 0; j < ModelConfig::depth; ++j) {
    const std::string name = "up" + std::to_string(j + 1);
    ups_[j].up.collect(name + ".up", out);
    ups_[j].conv.collect(name + ".conv", out);
  }
  out_conv_.collect("out_conv", out);
  return out;
}

nn::NamedTensors TFTransUNet1D::buffers() const {
  nn::NamedTensors out;
  inc_.collect_buffers("inc", out);
  for (std::size_t i = 0; i < ModelConfig::depth; ++i) downs_[i].collect_buffers("down" + std::to_string(i + 1), out);
  for (std::size_t j = 0; j < ModelConfig::depth; ++j)
    ups_[j].conv.collect_buffers("up" + std::to_string(j + 1) + ".conv", out);
  return out;
}

std::size_t TFTransUNet1D::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

}  // namespace tfunet
