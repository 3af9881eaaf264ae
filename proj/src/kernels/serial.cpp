#include "rows.hpp"
#include "tfunet/kernels.hpp"

namespace tfunet::kernels::serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c) {
  rows::GemmOperands ops(trans_a, trans_b, m, n, k, a, b);
  for (std::size_t i = 0; i < m; ++i) rows::gemm_row(i, n, k, ops.a, ops.b, c);
}

void gemm_batched(std::size_t count, bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                  const double* a, const double* b, double* c) {
  for (std::size_t q = 0; q < count; ++q) {
    rows::GemmOperands ops(trans_a, trans_b, m, n, k, a + q * m * k, b + q * k * n);
    for (std::size_t i = 0; i < m; ++i) rows::gemm_row(i, n, k, ops.a, ops.b, c + q * m * n);
  }
}

void conv1d_forward(const ConvDims& d, const double* x, const double* w, const double* bias, double* y) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t co = 0; co < d.out_channels; ++co) rows::conv1d_forward_row(d, b, co, x, w, bias, y);
}

void conv1d_backward_input(const ConvDims& d, const double* dy, const double* w, double* dx) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci) rows::conv1d_backward_input_row(d, b, ci, dy, w, dx);
}

void conv1d_backward_weight(const ConvDims& d, const double* dy, const double* x, double* dw, double* dbias) {
  for (std::size_t co = 0; co < d.out_channels; ++co) rows::conv1d_backward_weight_row(d, co, dy, x, dw, dbias);
}

void conv_transpose1d_forward(const ConvDims& d, const double* x, const double* w, const double* bias, double* y) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t co = 0; co < d.out_channels; ++co) rows::conv_transpose1d_forward_row(d, b, co, x, w, bias, y);
}

void conv_transpose1d_backward_input(const ConvDims& d, const double* dy, const double* w, double* dx) {
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t ci = 0; ci < d.in_channels; ++ci)
      rows::conv_transpose1d_backward_input_row(d, b, ci, dy, w, dx);
}

void conv_transpose1d_backward_weight(const ConvDims& d, const double* dy, const double* x, double* dw,
                                      double* dbias) {
  for (std::size_t ci = 0; ci < d.in_channels; ++ci) rows::conv_transpose1d_backward_weight_row(d, ci, dy, x, dw);
  if (dbias)
    for (std::size_t co = 0; co < d.out_channels; ++co) rows::conv_transpose1d_backward_bias_row(d, co, dy, dbias);
}

}  // namespace tfunet::kernels::serial
