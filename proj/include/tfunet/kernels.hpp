#pragma once

// Dense compute kernels behind the differentiable ops.
//
// Each kernel exists twice: a plain serial reference and an OpenMP version.
// The OpenMP versions partition work by output element only, so every output
// is accumulated in the same order as the serial reference and results are
// bitwise identical for any thread count.
//
// All kernels accumulate into their output (+=); callers zero it first.

#include <cstddef>

namespace tfunet::kernels {

struct ConvDims {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t in_len = 1;
  std::size_t out_len = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;  // ignored by the transposed kernels
};

#define TFUNET_KERNEL_DECLS                                                                              \
  /* C[m x n] += op(A) * op(B); op(A) is m x k. */                                                       \
  void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,    \
            const double* b, double* c);                                                                 \
  /* Batched C[i] += A[i] * op(B[i]) over `count` independent products. */                             \
  void gemm_batched(std::size_t count, bool trans_a, bool trans_b, std::size_t m, std::size_t n,          \
                    std::size_t k, const double* a, const double* b, double* c);                         \
  /* x: B x Cin x Lin, w: Cout x Cin x K, y: B x Cout x Lout (cross-correlation). */                     \
  void conv1d_forward(const ConvDims& d, const double* x, const double* w, const double* bias, double* y); \
  void conv1d_backward_input(const ConvDims& d, const double* dy, const double* w, double* dx);          \
  void conv1d_backward_weight(const ConvDims& d, const double* dy, const double* x, double* dw,          \
                              double* dbias);                                                            \
  /* x: B x Cin x Lin, w: Cin x Cout x K, y: B x Cout x ((Lin-1)*stride + K). */                        \
  void conv_transpose1d_forward(const ConvDims& d, const double* x, const double* w, const double* bias,  \
                                double* y);                                                              \
  void conv_transpose1d_backward_input(const ConvDims& d, const double* dy, const double* w, double* dx); \
  void conv_transpose1d_backward_weight(const ConvDims& d, const double* dy, const double* x, double* dw, \
                                        double* dbias);

namespace serial {
TFUNET_KERNEL_DECLS
}  // namespace serial

namespace parallel {
TFUNET_KERNEL_DECLS
}  // namespace parallel

#undef TFUNET_KERNEL_DECLS

enum class Backend { serial, parallel };

// Backend used by the differentiable ops. Defaults to parallel.
void set_backend(Backend b);
Backend backend();

}  // namespace tfunet::kernels
