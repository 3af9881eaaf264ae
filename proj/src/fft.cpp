#include "tfunet/fft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace tfunet::fft {

namespace {

std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> f;
  // Prefer radix 4 where possible to cut recursion depth.
  while (n % 4 == 0) {
    f.push_back(4);
    n /= 4;
  }
  for (std::size_t p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  return f;
}

}  // namespace

Plan::Plan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("fft plan length must be positive");
  factors_ = factorize(n);
  twiddle_fwd_.resize(n);
  twiddle_inv_.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    twiddle_fwd_[j] = {std::cos(ang), std::sin(ang)};
    twiddle_inv_[j] = std::conj(twiddle_fwd_[j]);
  }
}

void Plan::forward(std::span<const cplx> in, std::span<cplx> out) const { run(in, out, false); }
void Plan::inverse(std::span<const cplx> in, std::span<cplx> out) const { run(in, out, true); }

void Plan::run(std::span<const cplx> in, std::span<cplx> out, bool inverse) const {
  if (in.size() != n_ || out.size() != n_) throw std::invalid_argument("fft buffer length does not match plan");
  if (in.data() == out.data()) {
    std::vector<cplx> copy(in.begin(), in.end());
    recurse(copy.data(), 1, out.data(), n_, 0, inverse ? twiddle_inv_ : twiddle_fwd_);
  } else {
    recurse(in.data(), 1, out.data(), n_, 0, inverse ? twiddle_inv_ : twiddle_fwd_);
  }
}

// out[0..n) = DFT_n of in[0], in[stride], in[2*stride], ...
void Plan::recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level,
                   const std::vector<cplx>& tw) const {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const std::size_t p = factors_[level];
  const std::size_t m = n / p;
  for (std::size_t q = 0; q < p; ++q) recurse(in + q * stride, stride * p, out + q * m, m, level + 1, tw);

  // Combine: X[k + s*m] = sum_q W_n^{q*k} Y_q[k] * W_p^{q*s}.
  const std::size_t step = n_ / n;       // W_n^e = tw[e * step]
  const std::size_t pstep = n_ / p;      // W_p^e = tw[e * pstep]
  cplx scratch[64];
  std::vector<cplx> heap;
  cplx* t = scratch;
  if (p > 64) {
    heap.resize(p);
    t = heap.data();
  }
  for (std::size_t k = 0; k < m; ++k) {
    t[0] = out[k];
    for (std::size_t q = 1; q < p; ++q) t[q] = out[q * m + k] * tw[(q * k * step) % n_];
    switch (p) {
      case 2:
        out[k] = t[0] + t[1];
        out[k + m] = t[0] - t[1];
        break;
      case 4: {
        // W_4 = tw[n_/4]: -i forward, +i inverse.
        const cplx w1 = tw[pstep];
        const cplx a = t[0] + t[2], b = t[0] - t[2];
        const cplx c = t[1] + t[3], d = (t[1] - t[3]) * w1;
        out[k] = a + c;
        out[k + m] = b + d;
        out[k + 2 * m] = a - c;
        out[k + 3 * m] = b - d;
        break;
      }
      default:
        for (std::size_t s = 0; s < p; ++s) {
          cplx acc = t[0];
          for (std::size_t q = 1; q < p; ++q) acc += t[q] * tw[((q * s) % p) * pstep];
          out[k + s * m] = acc;
        }
    }
  }
}

std::shared_ptr<const Plan> plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const Plan>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_shared<const Plan>(n);
  return slot;
}

std::vector<cplx> dft(std::span<const double> x) {
  std::vector<cplx> in(x.begin(), x.end()), out(x.size());
  plan_for(x.size())->forward(in, out);
  return out;
}

std::vector<cplx> rfft_onesided(std::span<const double> x) {
  auto full = dft(x);
  full.resize(x.size() / 2 + 1);
  return full;
}

std::vector<cplx> dft_direct(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      // Reduce k*j mod n first so the angle stays accurate for large n.
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace tfunet::fft
