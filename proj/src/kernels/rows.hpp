#pragma once

// Per-output-row kernel bodies shared by the serial and OpenMP backends.
// Both backends call exactly these functions, one row at a time.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "tfunet/kernels.hpp"

namespace tfunet::kernels::rows {

inline void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// c[i, :] += a[i, :] * b, with a: m x k and b: k x n, both row-major.
inline void gemm_row(std::size_t i, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  double* __restrict ci = c + i * n;
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = ai[p];
    const double* __restrict bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
  }
}

// Valid output positions l for which l*stride + tap - padding lies in [0, in_len).
inline void tap_range(const ConvDims& d, std::size_t tap, std::size_t& lo, std::size_t& hi) {
  const auto s = static_cast<std::int64_t>(d.stride);
  const auto shift = static_cast<std::int64_t>(tap) - static_cast<std::int64_t>(d.padding);
  std::int64_t first = 0;
  if (shift < 0) first = (-shift + s - 1) / s;
  std::int64_t last = (static_cast<std::int64_t>(d.in_len) - 1 - shift);
  last = last < 0 ? -1 : last / s;
  last = std::min<std::int64_t>(last, static_cast<std::int64_t>(d.out_len) - 1);
  if (last < first) {
    lo = hi = 0;
    return;
  }
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(last) + 1;
}

// y[b, co, :]
inline void conv1d_forward_row(const ConvDims& d, std::size_t b, std::size_t co, const double* x, const double* w,
                               const double* bias, double* y) {
  double* __restrict yr = y + (b * d.out_channels + co) * d.out_len;
  if (bias) {
    const double bv = bias[co];
    for (std::size_t l = 0; l < d.out_len; ++l) yr[l] += bv;
  }
  for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
    const double* xr = x + (b * d.in_channels + ci) * d.in_len;
    const double* wr = w + (co * d.in_channels + ci) * d.kernel;
    for (std::size_t t = 0; t < d.kernel; ++t) {
      std::size_t lo, hi;
      tap_range(d, t, lo, hi);
      const double wv = wr[t];
      if (d.stride == 1) {
        const double* __restrict xs = xr + (static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(d.padding));
        for (std::size_t l = lo; l < hi; ++l) yr[l] += wv * xs[l];
      } else {
        for (std::size_t l = lo; l < hi; ++l) yr[l] += wv * xr[l * d.stride + t - d.padding];
      }
    }
  }
}

// dx[b, ci, :]
inline void conv1d_backward_input_row(const ConvDims& d, std::size_t b, std::size_t ci, const double* dy,
                                      const double* w, double* dx) {
  double* __restrict xr = dx + (b * d.in_channels + ci) * d.in_len;
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    const double* gr = dy + (b * d.out_channels + co) * d.out_len;
    const double* wr = w + (co * d.in_channels + ci) * d.kernel;
    for (std::size_t t = 0; t < d.kernel; ++t) {
      std::size_t lo, hi;
      tap_range(d, t, lo, hi);
      const double wv = wr[t];
      if (d.stride == 1) {
        double* __restrict xs = xr + (static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(d.padding));
        for (std::size_t l = lo; l < hi; ++l) xs[l] += wv * gr[l];
      } else {
        for (std::size_t l = lo; l < hi; ++l) xr[l * d.stride + t - d.padding] += wv * gr[l];
      }
    }
  }
}

// dw[co, :, :] and dbias[co]
inline void conv1d_backward_weight_row(const ConvDims& d, std::size_t co, const double* dy, const double* x,
                                       double* dw, double* dbias) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* gr = dy + (b * d.out_channels + co) * d.out_len;
    if (dbias) {
      double acc = 0.0;
      for (std::size_t l = 0; l < d.out_len; ++l) acc += gr[l];
      dbias[co] += acc;
    }
    for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
      const double* xr = x + (b * d.in_channels + ci) * d.in_len;
      double* wr = dw + (co * d.in_channels + ci) * d.kernel;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        std::size_t lo, hi;
        tap_range(d, t, lo, hi);
        double acc = 0.0;
        if (d.stride == 1) {
          const double* xs = xr + (static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(d.padding));
          for (std::size_t l = lo; l < hi; ++l) acc += gr[l] * xs[l];
        } else {
          for (std::size_t l = lo; l < hi; ++l) acc += gr[l] * xr[l * d.stride + t - d.padding];
        }
        wr[t] += acc;
      }
    }
  }
}

// Transposed convolution: y[b, co, l*stride + t] += x[b, ci, l] * w[ci, co, t].
inline void conv_transpose1d_forward_row(const ConvDims& d, std::size_t b, std::size_t co, const double* x,
                                         const double* w, const double* bias, double* y) {
  double* __restrict yr = y + (b * d.out_channels + co) * d.out_len;
  if (bias) {
    const double bv = bias[co];
    for (std::size_t l = 0; l < d.out_len; ++l) yr[l] += bv;
  }
  for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
    const double* xr = x + (b * d.in_channels + ci) * d.in_len;
    const double* wr = w + (ci * d.out_channels + co) * d.kernel;
    for (std::size_t t = 0; t < d.kernel; ++t) {
      const double wv = wr[t];
      double* ys = yr + t;
      for (std::size_t l = 0; l < d.in_len; ++l) ys[l * d.stride] += wv * xr[l];
    }
  }
}

inline void conv_transpose1d_backward_input_row(const ConvDims& d, std::size_t b, std::size_t ci, const double* dy,
                                                const double* w, double* dx) {
  double* __restrict xr = dx + (b * d.in_channels + ci) * d.in_len;
  for (std::size_t co = 0; co < d.out_channels; ++co) {
    const double* gr = dy + (b * d.out_channels + co) * d.out_len;
    const double* wr = w + (ci * d.out_channels + co) * d.kernel;
    for (std::size_t t = 0; t < d.kernel; ++t) {
      const double wv = wr[t];
      const double* gs = gr + t;
      for (std::size_t l = 0; l < d.in_len; ++l) xr[l] += wv * gs[l * d.stride];
    }
  }
}

// dw[ci, :, :]; dbias is handled separately since it is indexed by co.
inline void conv_transpose1d_backward_weight_row(const ConvDims& d, std::size_t ci, const double* dy,
                                                 const double* x, double* dw) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* xr = x + (b * d.in_channels + ci) * d.in_len;
    for (std::size_t co = 0; co < d.out_channels; ++co) {
      const double* gr = dy + (b * d.out_channels + co) * d.out_len;
      double* wr = dw + (ci * d.out_channels + co) * d.kernel;
      for (std::size_t t = 0; t < d.kernel; ++t) {
        const double* gs = gr + t;
        double acc = 0.0;
        for (std::size_t l = 0; l < d.in_len; ++l) acc += xr[l] * gs[l * d.stride];
        wr[t] += acc;
      }
    }
  }
}

inline void conv_transpose1d_backward_bias_row(const ConvDims& d, std::size_t co, const double* dy, double* dbias) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* gr = dy + (b * d.out_channels + co) * d.out_len;
    double acc = 0.0;
    for (std::size_t l = 0; l < d.out_len; ++l) acc += gr[l];
    dbias[co] += acc;
  }
}

// Materializes op(A) as m x k and op(B) as k x n when transposed.
struct GemmOperands {
  const double* a;
  const double* b;
  std::vector<double> a_buf, b_buf;

  GemmOperands(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a_in,
               const double* b_in)
      : a(a_in), b(b_in) {
    if (trans_a) {
      a_buf.resize(m * k);
      transpose(k, m, a_in, a_buf.data());
      a = a_buf.data();
    }
    if (trans_b) {
      b_buf.resize(k * n);
      transpose(n, k, b_in, b_buf.data());
      b = b_buf.data();
    }
  }
};

}  // namespace tfunet::kernels::rows
