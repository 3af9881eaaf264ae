#include <cmath>
#include <numbers>

#include "doctest.h"
#include "fd.hpp"
#include "tfunet/fft.hpp"

using namespace tfunet;

namespace {

std::vector<double> rnd(std::size_t n, std::uint64_t seed) {
  auto t = testing::random_tensor({n}, seed, false);
  return {t.data().begin(), t.data().end()};
}

// Textbook summation with its own twiddles, no shared code with the library.
std::vector<fft::cplx> oracle(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<fft::cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0, im = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * j) % n) / n;
      re += x[j] * std::cos(ang);
      im += x[j] * std::sin(ang);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

}  // namespace

TEST_CASE("FFT matches direct DFT for many lengths") {
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 12u, 16u, 17u, 30u, 49u, 97u, 128u, 225u, 360u, 1000u, 3600u}) {
    CAPTURE(n);
    const auto x = rnd(n, n);
    const auto fast = fft::dft(x);
    const auto ref = n <= 1000 ? oracle(x) : fft::dft_direct(x);
    double scale = 0.0, err = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      scale = std::max(scale, std::abs(ref[k]));
      err = std::max(err, std::abs(fast[k] - ref[k]));
    }
    CHECK(err <= 1e-11 * std::max(1.0, scale));
  }
}

TEST_CASE("dft_direct agrees with the long-double oracle") {
  const auto x = rnd(60, 5);
  const auto a = fft::dft_direct(x), b = oracle(x);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
}

TEST_CASE("inverse is unscaled and round-trips") {
  for (std::size_t n : {6u, 64u, 225u}) {
    const auto x = rnd(n, 7);
    auto plan = fft::plan_for(n);
    std::vector<fft::cplx> in(x.begin(), x.end()), spec(n), back(n);
    plan->forward(in, spec);
    plan->inverse(spec, back);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(back[j] / static_cast<double>(n) - in[j]) < 1e-12);
  }
}

TEST_CASE("Parseval: sum |x|^2 = (1/N) sum |X|^2") {
  for (std::size_t n : {16u, 225u, 3600u}) {
    const auto x = rnd(n, 9);
    const auto X = fft::dft(x);
    double t = 0.0, f = 0.0;
    for (double v : x) t += v * v;
    for (const auto& v : X) f += std::norm(v);
    CHECK(std::abs(t - f / static_cast<double>(n)) <= 1e-8 * t);
  }
}

TEST_CASE("one-sided spectrum and factorization") {
  const auto x = rnd(3600, 11);
  CHECK(fft::rfft_onesided(x).size() == 1801);
  CHECK(fft::rfft_onesided(rnd(225, 1)).size() == 113);
  std::size_t prod = 1;
  for (auto f : fft::plan_for(3600)->factors()) prod *= f;
  CHECK(prod == 3600);
  CHECK(fft::plan_for(3600) == fft::plan_for(3600));  // cached
}
