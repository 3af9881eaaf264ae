#pragma once

// Central finite-difference checks of every differentiable layer and of the
// end-to-end model.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tfunet/tensor.hpp"

namespace tfunet::gradcheck {

struct Options {
  std::uint64_t seed = 0;
  double eps = 1e-4;
  double tolerance = 1e-4;
  std::size_t max_per_tensor = 24;  // sampled coordinates per input tensor
  double abs_floor = 1e-6;          // denominator floor per unit of |f|
};

struct Result {
  std::string component;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil crossed a kink
  bool passed = false;
};

// Numeric derivative: Richardson extrapolation of central differences at eps
// and eps/2. Error per coordinate is |analytic - numeric| divided by
// max(|analytic|, |numeric|, abs_floor * max(1, |f|)), maximised over sampled
// coordinates of every input. Coordinates whose probes change a ReLU mask or
// max-pool argmax are skipped and replaced. `f` must rebuild the scalar loss
// from the current values of `inputs`.
Result check(const std::string& component, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
             const Options& opt);

// One entry per component: conv1d, conv_transpose1d, maxpool1d, batch_norm,
// layer_norm, softmax, linear, mhsa, ffn, transformer_layer, double_conv,
// smooth_l1, spectral_loss, model.
std::vector<Result> run_all(const Options& opt);

std::string format_report(const std::vector<Result>& results);

}  // namespace tfunet::gradcheck
