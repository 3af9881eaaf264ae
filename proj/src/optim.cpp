#include "tfunet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tfunet::optim {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!params_[i].has_grad()) throw std::logic_error("AdamW::step: parameter " + std::to_string(i) + " has no gradient");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i].data();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double CosineSchedule::lr_at(int epoch) const {
  const int e = std::clamp(epoch, 0, t_max);
  // Endpoints are returned exactly rather than through cos rounding.
  if (e == 0) return eta_max;
  if (e == t_max) return eta_min;
  const double mid = 0.5 * (eta_max + eta_min);
  const double half_range = 0.5 * (eta_max - eta_min);
  return mid + half_range * std::cos(std::numbers::pi * static_cast<double>(e) / static_cast<double>(t_max));
}

}  // namespace tfunet::optim
