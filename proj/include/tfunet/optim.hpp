#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tfunet/tensor.hpp"

namespace tfunet::optim {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (mhat / (sqrt(vhat) + eps) + wd theta)
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  // Throws std::logic_error if a parameter has no gradient.
  void step();
  void zero_grad();

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const AdamWConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

  // State access for checkpointing; one entry per parameter, same order.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

// Stepped once per epoch.
struct CosineSchedule {
  double eta_max = 1e-3;
  double eta_min = 1e-6;
  int t_max = 100;

  // eta_min + (eta_max - eta_min)(1 + cos(pi min(epoch, T_max) / T_max)) / 2
  double lr_at(int epoch) const;
};

}  // namespace tfunet::optim
