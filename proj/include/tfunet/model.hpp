#pragma once

// U-Net encoder/decoder with a Transformer encoder at the bottleneck.
//
//   INC (1 -> c) -> D1..D4 (maxpool + double conv, channels doubling)
//   -> tokens (B x T x 16c) + positional encoding -> N encoder layers
//   -> U1..U4 (transposed conv, concat skip, double conv) -> OutConv (k=1)
//
// Skip pairing: U1 with D3, U2 with D2, U3 with D1, U4 with INC.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tfunet/nn.hpp"

namespace tfunet {

struct ModelConfig {
  static constexpr std::size_t depth = 4;

  std::size_t base_channels = 16;
  std::size_t transformer_layers = 2;
  std::size_t heads = 4;
  std::size_t d_ff_ratio = 4;
  std::size_t input_len = 3600;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::uint64_t seed = 0;

  std::size_t bottleneck_dim() const { return base_channels << depth; }
  std::size_t bottleneck_len() const { return input_len >> depth; }
  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

// Closed-form trainable parameter count for a config.
std::size_t parameter_count(const ModelConfig& cfg);

class TFTransUNet1D {
 public:
  explicit TFTransUNet1D(const ModelConfig& cfg);

  // x: B x 1 x input_len -> B x 1 x input_len.
  Tensor forward(const Tensor& x, bool training);

  // Stable order: encoder, bottleneck, decoder, output head.
  nn::NamedTensors parameters() const;
  // Batch-norm running statistics, same ordering rule.
  nn::NamedTensors buffers() const;
  std::size_t num_parameters() const;

  const ModelConfig& config() const { return cfg_; }

 private:
  struct Up {
    nn::ConvTranspose1d up;
    nn::DoubleConv conv;
  };

  ModelConfig cfg_;
  nn::DoubleConv inc_;
  std::array<nn::DoubleConv, ModelConfig::depth> downs_;
  Tensor pos_enc_;
  std::vector<nn::TransformerEncoderLayer> encoder_;
  std::array<Up, ModelConfig::depth> ups_;
  nn::Conv1d out_conv_;
};

}  // namespace tfunet
