#include <cmath>

#include "doctest.h"
#include "fd.hpp"
#include "tfunet/fft.hpp"
#include "tfunet/loss.hpp"

using namespace tfunet;
using testing::random_tensor;

namespace {

// Direct-DFT evaluation of the spectral term.
double spectral_oracle(const Tensor& y_hat, const Tensor& y) {
  const std::size_t n = y.shape().back(), segs = y.numel() / n, k = n / 2 + 1;
  double total = 0.0;
  for (std::size_t s = 0; s < segs; ++s) {
    std::vector<double> a(y_hat.data().begin() + s * n, y_hat.data().begin() + (s + 1) * n);
    std::vector<double> b(y.data().begin() + s * n, y.data().begin() + (s + 1) * n);
    const auto A = fft::dft_direct(a), B = fft::dft_direct(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = std::abs(B[i]) - std::abs(A[i]);
      acc += d * d;
    }
    total += acc / static_cast<double>(k);
  }
  return total / static_cast<double>(segs);
}

}  // namespace

TEST_CASE("smooth L1 values") {
  Tensor y = Tensor::from({4}, {0, 0, 0, 0});
  Tensor p = Tensor::from({4}, {0.5, -0.5, 2.0, -3.0});
  // beta = 1: 0.125, 0.125, 1.5, 2.5
  CHECK(smooth_l1(p, y, 1.0).item() == doctest::Approx((0.125 + 0.125 + 1.5 + 2.5) / 4.0).epsilon(1e-15));
  // Continuity at |e| = beta.
  const double b = 0.7;
  const double below = smooth_l1(Tensor::from({1}, {b - 1e-12}), Tensor::from({1}, {0.0}), b).item();
  const double above = smooth_l1(Tensor::from({1}, {b + 1e-12}), Tensor::from({1}, {0.0}), b).item();
  CHECK(std::abs(below - above) < 1e-10);
  CHECK_THROWS(smooth_l1(p, y, 0.0));
}

TEST_CASE("spectral loss matches a direct-DFT oracle") {
  for (std::size_t n : {16u, 225u, 3600u}) {
    CAPTURE(n);
    Tensor y = random_tensor({2, 1, n}, n, false), y_hat = random_tensor({2, 1, n}, n + 1, false);
    const double fast = spectral_loss(y_hat, y).item();
    const double ref = spectral_oracle(y_hat, y);
    CHECK(std::abs(fast - ref) <= 1e-8 * std::max(1.0, ref));
  }
  Tensor y = random_tensor({1, 1, 16}, 3, false);
  CHECK(spectral_loss(y, y).item() == 0.0);
}

TEST_CASE("spectral loss gradient vs finite differences") {
  Tensor y = random_tensor({2, 1, 30}, 4, false), y_hat = random_tensor({2, 1, 30}, 5, true);
  CHECK(testing::fd_max_rel_error([&] { return spectral_loss(y_hat, y); }, {y_hat}, 1e-6) < 1e-6);
}

TEST_CASE("total loss combines both terms and reports them") {
  Tensor y = random_tensor({2, 1, 32}, 6, false), y_hat = random_tensor({2, 1, 32}, 7, true);
  LossConfig cfg;
  cfg.w_time = 0.7;
  cfg.w_spectral = 0.2;
  auto [t, r] = total_loss(y_hat, y, cfg);
  CHECK(r.time_loss == doctest::Approx(smooth_l1(y_hat, y, 1.0).item()));
  CHECK(r.spectral_loss == doctest::Approx(spectral_loss(y_hat, y).item()));
  CHECK(t.item() == doctest::Approx(0.7 * r.time_loss + 0.2 * r.spectral_loss));
  CHECK(r.total == doctest::Approx(t.item()));
  CHECK(testing::fd_max_rel_error([&] { return total_loss(y_hat, y, cfg).first; }, {y_hat}) < 1e-6);

  cfg.w_spectral = 0.0;
  auto [t0, r0] = total_loss(y_hat, y, cfg);
  CHECK(r0.spectral_loss > 0.0);  // still reported
  CHECK(t0.item() == doctest::Approx(0.7 * r0.time_loss));
  cfg.w_time = 0.0;
  CHECK_THROWS(total_loss(y_hat, y, cfg));
}
