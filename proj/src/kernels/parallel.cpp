#include <atomic>
#include <cstdint>

#include "rows.hpp"
#include "tfunet/kernels.hpp"

namespace tfunet::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

namespace parallel {

using idx = std::int64_t;

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c) {
  rows::GemmOperands ops(trans_a, trans_b, m, n, k, a, b);
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) rows::gemm_row(static_cast<std::size_t>(i), n, k, ops.a, ops.b, c);
}

void gemm_batched(std::size_t count, bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static)
  for (idx q = 0; q < static_cast<idx>(count); ++q) {
    const auto uq = static_cast<std::size_t>(q);
    rows::GemmOperands ops(trans_a, trans_b, m, n, k, a + uq * m * k, b + uq * k * n);
    for (std::size_t i = 0; i < m; ++i) rows::gemm_row(i, n, k, ops.a, ops.b, c + uq * m * n);
  }
}

void conv1d_forward(const ConvDims& d, const double* x, const double* w, const double* bias, double* y) {
  const auto total = static_cast<idx>(d.batch * d.out_channels);
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < total; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    rows::conv1d_forward_row(d, ur / d.out_channels, ur % d.out_channels, x, w, bias, y);
  }
}

void conv1d_backward_input(const ConvDims& d, const double* dy, const double* w, double* dx) {
  const auto total = static_cast<idx>(d.batch * d.in_channels);
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < total; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    rows::conv1d_backward_input_row(d, ur / d.in_channels, ur % d.in_channels, dy, w, dx);
  }
}

void conv1d_backward_weight(const ConvDims& d, const double* dy, const double* x, double* dw, double* dbias) {
#pragma omp parallel for schedule(static)
  for (idx co = 0; co < static_cast<idx>(d.out_channels); ++co)
    rows::conv1d_backward_weight_row(d, static_cast<std::size_t>(co), dy, x, dw, dbias);
}

void conv_transpose1d_forward(const ConvDims& d, const double* x, const double* w, const double* bias, double* y) {
  const auto total = static_cast<idx>(d.batch * d.out_channels);
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < total; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    rows::conv_transpose1d_forward_row(d, ur / d.out_channels, ur % d.out_channels, x, w, bias, y);
  }
}

void conv_transpose1d_backward_input(const ConvDims& d, const double* dy, const double* w, double* dx) {
  const auto total = static_cast<idx>(d.batch * d.in_channels);
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < total; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    rows::conv_transpose1d_backward_input_row(d, ur / d.in_channels, ur % d.in_channels, dy, w, dx);
  }
}

void conv_transpose1d_backward_weight(const ConvDims& d, const double* dy, const double* x, double* dw,
                                      double* dbias) {
#pragma omp parallel for schedule(static)
  for (idx ci = 0; ci < static_cast<idx>(d.in_channels); ++ci)
    rows::conv_transpose1d_backward_weight_row(d, static_cast<std::size_t>(ci), dy, x, dw);
  if (dbias) {
#pragma omp parallel for schedule(static)
    for (idx co = 0; co < static_cast<idx>(d.out_channels); ++co)
      rows::conv_transpose1d_backward_bias_row(d, static_cast<std::size_t>(co), dy, dbias);
  }
}

}  // namespace parallel
}  // namespace tfunet::kernels
