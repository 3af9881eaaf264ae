#include "tfunet/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "tfunet/fft.hpp"
#include "tfunet/ops.hpp"

namespace tfunet {

void LossConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("loss beta must be > 0");
  if (w_time < 0.0 || w_spectral < 0.0) throw std::invalid_argument("loss weights must be >= 0");
  if (!(w_time + w_spectral > 0.0)) throw std::invalid_argument("loss weights must not both be zero");
}

Tensor smooth_l1(const Tensor& y_hat, const Tensor& y, double beta) {
  if (y_hat.shape() != y.shape()) throw ShapeError("smooth_l1", y_hat.shape(), y.shape());
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be > 0");
  const std::size_t n = y.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::abs(y[i] - y_hat[i]);
    acc += e < beta ? 0.5 * e * e / beta : e - 0.5 * beta;
  }
  const bool track = detail::tracking({&y_hat, &y});
  Tensor out = detail::result({1}, {acc / static_cast<double>(n)}, track);
  if (track) {
    auto P = y_hat.impl(), T = y.impl(), O = out.impl();
    detail::record({y_hat, y}, out, [P, T, O, beta, n] {
      const double g = O->grad[0] / static_cast<double>(n);
      double* gp = detail::grad_sink(P);
      double* gt = detail::grad_sink(T);
      for (std::size_t i = 0; i < n; ++i) {
        const double e = T->data[i] - P->data[i];
        const double d = std::abs(e) < beta ? e / beta : (e > 0.0 ? 1.0 : -1.0);
        if (gp) gp[i] -= g * d;
        if (gt) gt[i] += g * d;
      }
    });
  }
  return out;
}

Tensor spectral_loss(const Tensor& y_hat, const Tensor& y) {
  if (y_hat.shape() != y.shape()) throw ShapeError("spectral_loss", y_hat.shape(), y.shape());
  const std::size_t n = y.shape().back();
  const std::size_t segments = y.numel() / n;
  const std::size_t bins = n / 2 + 1;
  const auto plan = fft::plan_for(n);

  // Per segment: spectrum of y_hat (kept for backward) and magnitude residual.
  std::vector<fft::cplx> yhat_spec(segments * bins);
  std::vector<double> residual(segments * bins);  // |Yhat_k| - |Y_k|
  std::vector<fft::cplx> in(n), out(n);
  double acc = 0.0;
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t j = 0; j < n; ++j) in[j] = y[s * n + j];
    plan->forward(in, out);
    std::vector<double> mag_y(bins);
    for (std::size_t k = 0; k < bins; ++k) mag_y[k] = std::abs(out[k]);
    for (std::size_t j = 0; j < n; ++j) in[j] = y_hat[s * n + j];
    plan->forward(in, out);
    double seg = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      yhat_spec[s * bins + k] = out[k];
      const double r = std::abs(out[k]) - mag_y[k];
      residual[s * bins + k] = r;
      seg += r * r;
    }
    acc += seg / static_cast<double>(bins);
  }

  const bool track = detail::tracking({&y_hat});
  Tensor out_t = detail::result({1}, {acc / static_cast<double>(segments)}, track);
  if (track) {
    auto P = y_hat.impl(), O = out_t.impl();
    detail::record({y_hat}, out_t,
                   [P, O, plan, n, segments, bins, yhat_spec = std::move(yhat_spec), residual = std::move(residual)] {
                     // dL/dyhat[j] = Re sum_k g_k exp(+2 pi i k j / N),
                     // g_k = (2/K) (|Yhat_k| - |Y_k|) Yhat_k / |Yhat_k|, k in one-sided bins.
                     const double coef = 2.0 * O->grad[0] / (static_cast<double>(bins) * static_cast<double>(segments));
                     double* gp = detail::grad_sink(P);
                     std::vector<fft::cplx> g(n), back(n);
                     for (std::size_t s = 0; s < segments; ++s) {
                       std::fill(g.begin(), g.end(), fft::cplx{0.0, 0.0});
                       for (std::size_t k = 0; k < bins; ++k) {
                         const fft::cplx z = yhat_spec[s * bins + k];
                         const double mag = std::abs(z);
                         if (mag < 1e-12) continue;
                         g[k] = coef * residual[s * bins + k] * (z / mag);
                       }
                       plan->inverse(g, back);
                       for (std::size_t j = 0; j < n; ++j) gp[s * n + j] += back[j].real();
                     }
                   });
  }
  return out_t;
}

std::pair<Tensor, LossReport> total_loss(const Tensor& y_hat, const Tensor& y, const LossConfig& cfg) {
  cfg.validate();
  LossReport report;
  Tensor time = smooth_l1(y_hat, y, cfg.beta);
  report.time_loss = time.item();
  Tensor total = scale(time, cfg.w_time);
  if (cfg.w_spectral > 0.0) {
    Tensor spec = spectral_loss(y_hat, y);
    report.spectral_loss = spec.item();
    total = add(total, scale(spec, cfg.w_spectral));
  } else {
    // Still reported so runs with and without the spectral term are comparable.
    report.spectral_loss = spectral_loss(y_hat.clone(), y).item();
  }
  report.total = cfg.w_time * report.time_loss + cfg.w_spectral * report.spectral_loss;
  return {total, report};
}

}  // namespace tfunet
