#pragma once

// Mixed-radix Cooley-Tukey FFT for arbitrary lengths.
//
// The length is factored into primes and transformed by recursive
// decimation in time; prime factors without a dedicated butterfly use a
// direct O(p^2) butterfly, so any length is exact (no zero padding).
// Forward uses exp(-2*pi*i*k*n/N); inverse uses the + sign and is unscaled.

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace tfunet::fft {

using cplx = std::complex<double>;

class Plan {
 public:
  explicit Plan(std::size_t n);

  std::size_t size() const { return n_; }
  const std::vector<std::size_t>& factors() const { return factors_; }

  void forward(std::span<const cplx> in, std::span<cplx> out) const;
  void inverse(std::span<const cplx> in, std::span<cplx> out) const;

 private:
  void run(std::span<const cplx> in, std::span<cplx> out, bool inverse) const;
  void recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level,
               const std::vector<cplx>& tw) const;

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<cplx> twiddle_fwd_;  // exp(-2*pi*i*j/N)
  std::vector<cplx> twiddle_inv_;
};

// Shared plan for length n; plans are cached and safe to use concurrently.
std::shared_ptr<const Plan> plan_for(std::size_t n);

std::vector<cplx> dft(std::span<const double> x);
// Bins 0..N/2 of the DFT of a real sequence.
std::vector<cplx> rfft_onesided(std::span<const double> x);

// O(N^2) direct summation, used as an independent reference.
std::vector<cplx> dft_direct(std::span<const double> x);

}  // namespace tfunet::fft
