#pragma once

// Dual-domain training loss: Smooth-L1 in time plus squared FFT-magnitude
// differences over the one-sided spectrum.

#include <utility>

#include "tfunet/tensor.hpp"

namespace tfunet {

struct LossConfig {
  double beta = 1.0;        // Smooth-L1 threshold
  double w_time = 1.0;
  double w_spectral = 0.1;

  void validate() const;
};

struct LossReport {
  double time_loss = 0.0;
  double spectral_loss = 0.0;
  double total = 0.0;
};

// Mean over elements of 0.5 e^2 / beta for |e| < beta, else |e| - 0.5 beta.
Tensor smooth_l1(const Tensor& y_hat, const Tensor& y, double beta);

// Per segment (1/K) sum_k (|Y_k| - |Yhat_k|)^2 over K = N/2 + 1 one-sided
// bins, averaged over the batch. Inputs are B x 1 x N (or B x N / N).
// Only y_hat is differentiated; bins with |Yhat_k| < 1e-12 get zero gradient.
Tensor spectral_loss(const Tensor& y_hat, const Tensor& y);

std::pair<Tensor, LossReport> total_loss(const Tensor& y_hat, const Tensor& y, const LossConfig& cfg);

}  // namespace tfunet
