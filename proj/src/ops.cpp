#include "tfunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tfunet/kernels.hpp"

#define TFUNET_DISPATCH(fn, ...)                              \
  do {                                                        \
    if (kernels::backend() == kernels::Backend::serial)       \
      kernels::serial::fn(__VA_ARGS__);                       \
    else                                                      \
      kernels::parallel::fn(__VA_ARGS__);                     \
  } while (0)

namespace tfunet {

using detail::grad_sink;
using detail::record;
using detail::result;
using detail::tracking;

namespace {

enum class BinaryOp { add, sub, mul };

Tensor binary(const char* name, BinaryOp op, const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.numel() == 1 && a.shape() != b.shape();
  if (!scalar_b && a.shape() != b.shape()) throw ShapeError(name, a.shape(), b.shape());
  const bool track = tracking({&a, &b});
  Tensor out = result(a.shape(), track);
  const auto n = a.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double bv = scalar_b ? pb[0] : pb[i];
    switch (op) {
      case BinaryOp::add: po[i] = pa[i] + bv; break;
      case BinaryOp::sub: po[i] = pa[i] - bv; break;
      case BinaryOp::mul: po[i] = pa[i] * bv; break;
    }
  }
  if (track) {
    auto A = a.impl(), B = b.impl(), O = out.impl();
    record({a, b}, out, [A, B, O, op, scalar_b] {
      const auto n = O->data.size();
      const double* g = O->grad.data();
      if (double* ga = grad_sink(A)) {
        for (std::size_t i = 0; i < n; ++i) {
          const double bv = scalar_b ? B->data[0] : B->data[i];
          ga[i] += op == BinaryOp::mul ? g[i] * bv : g[i];
        }
      }
      if (double* gb = grad_sink(B)) {
        for (std::size_t i = 0; i < n; ++i) {
          double v = g[i];
          if (op == BinaryOp::sub) v = -v;
          if (op == BinaryOp::mul) v *= A->data[i];
          gb[scalar_b ? 0 : i] += v;
        }
      }
    });
  }
  return out;
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinaryOp::mul, a, b); }

Tensor scale(const Tensor& a, double c) {
  const bool track = tracking({&a});
  Tensor out = result(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * c;
  if (track) {
    auto A = a.impl(), O = out.impl();
    record({a}, out, [A, O, c] {
      double* ga = grad_sink(A);
      for (std::size_t i = 0; i < O->grad.size(); ++i) ga[i] += c * O->grad[i];
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  const bool track = tracking({&a});
  Tensor out = result(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + c;
  if (track) {
    auto A = a.impl(), O = out.impl();
    record({a}, out, [A, O] {
      double* ga = grad_sink(A);
      for (std::size_t i = 0; i < O->grad.size(); ++i) ga[i] += O->grad[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  const bool track = tracking({&a});
  Tensor out = result(a.shape(), track);
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  if (auto* mon = detail::branch_monitor())
    for (std::size_t i = 0; i < a.numel(); ++i) mon->note(a[i] > 0.0 ? i : ~i);
  if (track) {
    auto A = a.impl(), O = out.impl();
    record({a}, out, [A, O] {
      double* ga = grad_sink(A);
      for (std::size_t i = 0; i < O->grad.size(); ++i)
        if (A->data[i] > 0.0) ga[i] += O->grad[i];
    });
  }
  return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 2) throw ShapeError("add_channel_bias: input must be rank 2 or 3, got " + shape_str(x.shape()));
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t channels = x.dim(x.rank() - 2);
  const std::size_t len = x.dim(x.rank() - 1);
  if (bias.numel() != channels) throw ShapeError("add_channel_bias", x.shape(), bias.shape());
  const bool track = tracking({&x, &bias});
  Tensor out = result(x.shape(), track);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * len;
      for (std::size_t l = 0; l < len; ++l) out[base + l] = x[base + l] + bias[c];
    }
  if (track) {
    auto X = x.impl(), Bi = bias.impl(), O = out.impl();
    record({x, bias}, out, [X, Bi, O, batch, channels, len] {
      const double* g = O->grad.data();
      if (double* gx = grad_sink(X))
        for (std::size_t i = 0; i < O->grad.size(); ++i) gx[i] += g[i];
      if (double* gb = grad_sink(Bi))
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (std::size_t l = 0; l < len; ++l) acc += g[(b * channels + c) * len + l];
            gb[c] += acc;
          }
    });
  }
  return out;
}

Tensor add_broadcast_batch(const Tensor& x, const Tensor& table) {
  require_rank("add_broadcast_batch", x, 3);
  if (table.rank() != 2 || table.dim(0) != x.dim(1) || table.dim(1) != x.dim(2))
    throw ShapeError("add_broadcast_batch", x.shape(), table.shape());
  const bool track = tracking({&x});
  Tensor out = result(x.shape(), track);
  const std::size_t per = table.numel();
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] + table[i % per];
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O] {
      double* gx = grad_sink(X);
      for (std::size_t i = 0; i < O->grad.size(); ++i) gx[i] += O->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  const bool track = tracking({&a});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  Tensor out = result({1}, {acc}, track);
  if (track) {
    auto A = a.impl(), O = out.impl();
    record({a}, out, [A, O] {
      double* ga = grad_sink(A);
      const double g = O->grad[0];
      for (std::size_t i = 0; i < A->data.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool track = tracking({&a, &b});
  Tensor out = result({m, n}, track);
  TFUNET_DISPATCH(gemm, false, false, m, n, k, a.data().data(), b.data().data(), out.data().data());
  if (track) {
    auto A = a.impl(), B = b.impl(), O = out.impl();
    record({a, b}, out, [A, B, O, m, n, k] {
      const double* g = O->grad.data();
      if (double* ga = grad_sink(A)) TFUNET_DISPATCH(gemm, false, true, m, k, n, g, B->data.data(), ga);
      if (double* gb = grad_sink(B)) TFUNET_DISPATCH(gemm, true, false, k, n, m, A->data.data(), g, gb);
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) throw ShapeError("bmm", a.shape(), b.shape());
  const std::size_t q = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  const bool track = tracking({&a, &b});
  Tensor out = result({q, m, n}, track);
  TFUNET_DISPATCH(gemm_batched, q, false, false, m, n, k, a.data().data(), b.data().data(), out.data().data());
  if (track) {
    auto A = a.impl(), B = b.impl(), O = out.impl();
    record({a, b}, out, [A, B, O, q, m, n, k] {
      const double* g = O->grad.data();
      if (double* ga = grad_sink(A)) TFUNET_DISPATCH(gemm_batched, q, false, true, m, k, n, g, B->data.data(), ga);
      if (double* gb = grad_sink(B)) TFUNET_DISPATCH(gemm_batched, q, true, false, k, n, m, A->data.data(), g, gb);
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
  require_rank("linear", weight, 2);
  const std::size_t in = weight.dim(0), outf = weight.dim(1);
  if (x.shape().back() != in) throw ShapeError("linear", x.shape(), weight.shape());
  if (bias && bias->numel() != outf) throw ShapeError("linear bias", weight.shape(), bias->shape());
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outf;
  const bool track = tracking({&x, &weight, bias});
  Tensor out = result(out_shape, track);
  double* po = out.data().data();
  if (bias)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outf; ++j) po[r * outf + j] = (*bias)[j];
  TFUNET_DISPATCH(gemm, false, false, rows, outf, in, x.data().data(), weight.data().data(), po);
  if (track) {
    auto X = x.impl(), W = weight.impl(), O = out.impl();
    std::shared_ptr<TensorImpl> Bi = bias ? bias->impl() : nullptr;
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    record(inputs, out, [X, W, Bi, O, rows, in, outf] {
      const double* g = O->grad.data();
      if (double* gx = grad_sink(X)) TFUNET_DISPATCH(gemm, false, true, rows, in, outf, g, W->data.data(), gx);
      if (double* gw = grad_sink(W)) TFUNET_DISPATCH(gemm, true, false, in, outf, rows, X->data.data(), g, gw);
      if (Bi)
        if (double* gb = grad_sink(Bi))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < outf; ++j) gb[j] += g[r * outf + j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) throw ShapeError("reshape", x.shape(), shape);
  const bool track = tracking({&x});
  Tensor out = result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), track);
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O] {
      double* gx = grad_sink(X);
      for (std::size_t i = 0; i < O->grad.size(); ++i) gx[i] += O->grad[i];
    });
  }
  return out;
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last: rank must be 2 or 3, got " + shape_str(x.shape()));
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t r = x.dim(x.rank() - 2), c = x.dim(x.rank() - 1);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  const bool track = tracking({&x});
  Tensor out = result(shape, track);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = x[b * r * c + i * c + j];
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O, batch, r, c] {
      double* gx = grad_sink(X);
      const double* g = O->grad.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank("concat_channels", a, 3);
  require_rank("concat_channels", b, 3);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) throw ShapeError("concat_channels", a.shape(), b.shape());
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), len = a.dim(2);
  const bool track = tracking({&a, &b});
  Tensor out = result({batch, ca + cb, len}, track);
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data().begin() + n * ca * len, ca * len, out.data().begin() + n * (ca + cb) * len);
    std::copy_n(b.data().begin() + n * cb * len, cb * len, out.data().begin() + (n * (ca + cb) + ca) * len);
  }
  if (track) {
    auto A = a.impl(), B = b.impl(), O = out.impl();
    record({a, b}, out, [A, B, O, batch, ca, cb, len] {
      const double* g = O->grad.data();
      double* ga = grad_sink(A);
      double* gb = grad_sink(B);
      for (std::size_t n = 0; n < batch; ++n) {
        const double* row = g + n * (ca + cb) * len;
        if (ga)
          for (std::size_t i = 0; i < ca * len; ++i) ga[n * ca * len + i] += row[i];
        if (gb)
          for (std::size_t i = 0; i < cb * len; ++i) gb[n * cb * len + i] += row[ca * len + i];
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank("slice_channels", x, 3);
  const std::size_t batch = x.dim(0), channels = x.dim(1), len = x.dim(2);
  if (count == 0 || begin + count > channels)
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_str(x.shape()));
  const bool track = tracking({&x});
  Tensor out = result({batch, count, len}, track);
  for (std::size_t n = 0; n < batch; ++n)
    std::copy_n(x.data().begin() + (n * channels + begin) * len, count * len, out.data().begin() + n * count * len);
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O, batch, channels, len, begin, count] {
      double* gx = grad_sink(X);
      const double* g = O->grad.data();
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < count * len; ++i) gx[(n * channels + begin) * len + i] += g[n * count * len + i];
    });
  }
  return out;
}

Tensor softmax_last(const Tensor& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  const bool track = tracking({&x});
  Tensor out = result(x.shape(), track);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * cols;
    double* yr = out.data().data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O, rows, cols] {
      double* gx = grad_sink(X);
      const double f = fault_factor(FaultSite::softmax);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = O->data.data() + r * cols;
        const double* g = O->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += f * y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

namespace {

// Index map between B x T x d and (B*H) x T x dh layouts.
struct HeadLayout {
  std::size_t batch, tokens, dim, heads, head_dim;
  std::size_t merged(std::size_t b, std::size_t t, std::size_t h, std::size_t j) const {
    return (b * tokens + t) * dim + h * head_dim + j;
  }
  std::size_t split(std::size_t b, std::size_t t, std::size_t h, std::size_t j) const {
    return ((b * heads + h) * tokens + t) * head_dim + j;
  }
};

Tensor permute_heads(const Tensor& x, const HeadLayout& L, bool to_split) {
  const bool track = tracking({&x});
  Shape shape = to_split ? Shape{L.batch * L.heads, L.tokens, L.head_dim} : Shape{L.batch, L.tokens, L.dim};
  Tensor out = result(shape, track);
  auto apply = [L, to_split](const double* src, double* dst, bool accumulate) {
    for (std::size_t b = 0; b < L.batch; ++b)
      for (std::size_t t = 0; t < L.tokens; ++t)
        for (std::size_t h = 0; h < L.heads; ++h)
          for (std::size_t j = 0; j < L.head_dim; ++j) {
            const auto from = to_split ? L.merged(b, t, h, j) : L.split(b, t, h, j);
            const auto to = to_split ? L.split(b, t, h, j) : L.merged(b, t, h, j);
            if (accumulate)
              dst[from] += src[to];
            else
              dst[to] = src[from];
          }
  };
  apply(x.data().data(), out.data().data(), false);
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O, apply] { apply(O->grad.data(), grad_sink(X), true); });
  }
  return out;
}

}  // namespace

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require_rank("split_heads", x, 3);
  if (heads == 0 || x.dim(2) % heads != 0)
    throw ShapeError("split_heads: feature dim " + std::to_string(x.dim(2)) + " not divisible by " +
                     std::to_string(heads) + " heads");
  return permute_heads(x, {x.dim(0), x.dim(1), x.dim(2), heads, x.dim(2) / heads}, true);
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  require_rank("merge_heads", x, 3);
  if (heads == 0 || x.dim(0) % heads != 0)
    throw ShapeError("merge_heads: leading dim " + std::to_string(x.dim(0)) + " not divisible by " +
                     std::to_string(heads) + " heads");
  return permute_heads(x, {x.dim(0) / heads, x.dim(1), x.dim(2) * heads, heads, x.dim(2)}, false);
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor* bias, std::size_t stride, std::size_t padding) {
  require_rank("conv1d", x, 3);
  require_rank("conv1d weight", weight, 3);
  if (x.dim(1) != weight.dim(1)) throw ShapeError("conv1d channel mismatch", x.shape(), weight.shape());
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
  kernels::ConvDims d;
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.in_len = x.dim(2);
  d.out_channels = weight.dim(0);
  d.kernel = weight.dim(2);
  d.stride = stride;
  d.padding = padding;
  if (d.in_len + 2 * padding < d.kernel)
    throw ShapeError("conv1d: input length " + std::to_string(d.in_len) + " with padding " + std::to_string(padding) +
                     " shorter than kernel " + std::to_string(d.kernel));
  if (bias && bias->numel() != d.out_channels) throw ShapeError("conv1d bias", weight.shape(), bias->shape());
  d.out_len = (d.in_len + 2 * padding - d.kernel) / stride + 1;

  const bool track = tracking({&x, &weight, bias});
  Tensor out = result({d.batch, d.out_channels, d.out_len}, track);
  TFUNET_DISPATCH(conv1d_forward, d, x.data().data(), weight.data().data(), bias ? bias->data().data() : nullptr,
                  out.data().data());
  if (track) {
    auto X = x.impl(), W = weight.impl(), O = out.impl();
    std::shared_ptr<TensorImpl> Bi = bias ? bias->impl() : nullptr;
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    record(inputs, out, [X, W, Bi, O, d] {
      const double* g = O->grad.data();
      if (double* gx = grad_sink(X)) {
        const double f = fault_factor(FaultSite::conv1d);
        if (f != 1.0) {
          std::vector<double> scaled(O->grad);
          for (auto& v : scaled) v *= f;
          TFUNET_DISPATCH(conv1d_backward_input, d, scaled.data(), W->data.data(), gx);
        } else {
          TFUNET_DISPATCH(conv1d_backward_input, d, g, W->data.data(), gx);
        }
      }
      double* gw = grad_sink(W);
      double* gb = Bi ? grad_sink(Bi) : nullptr;
      if (gw) {
        TFUNET_DISPATCH(conv1d_backward_weight, d, g, X->data.data(), gw, gb);
      } else if (gb) {
        for (std::size_t b = 0; b < d.batch; ++b)
          for (std::size_t c = 0; c < d.out_channels; ++c)
            for (std::size_t l = 0; l < d.out_len; ++l) gb[c] += g[(b * d.out_channels + c) * d.out_len + l];
      }
    });
  }
  return out;
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor* bias, std::size_t stride) {
  require_rank("conv_transpose1d", x, 3);
  require_rank("conv_transpose1d weight", weight, 3);
  if (x.dim(1) != weight.dim(0)) throw ShapeError("conv_transpose1d channel mismatch", x.shape(), weight.shape());
  if (stride == 0) throw std::invalid_argument("conv_transpose1d: stride must be positive");
  kernels::ConvDims d;
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.in_len = x.dim(2);
  d.out_channels = weight.dim(1);
  d.kernel = weight.dim(2);
  d.stride = stride;
  d.out_len = (d.in_len - 1) * stride + d.kernel;
  if (bias && bias->numel() != d.out_channels) throw ShapeError("conv_transpose1d bias", weight.shape(), bias->shape());

  const bool track = tracking({&x, &weight, bias});
  Tensor out = result({d.batch, d.out_channels, d.out_len}, track);
  TFUNET_DISPATCH(conv_transpose1d_forward, d, x.data().data(), weight.data().data(),
                  bias ? bias->data().data() : nullptr, out.data().data());
  if (track) {
    auto X = x.impl(), W = weight.impl(), O = out.impl();
    std::shared_ptr<TensorImpl> Bi = bias ? bias->impl() : nullptr;
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    record(inputs, out, [X, W, Bi, O, d] {
      const double* g = O->grad.data();
      if (double* gx = grad_sink(X)) {
        const double f = fault_factor(FaultSite::conv_transpose1d);
        if (f != 1.0) {
          std::vector<double> scaled(O->grad);
          for (auto& v : scaled) v *= f;
          TFUNET_DISPATCH(conv_transpose1d_backward_input, d, scaled.data(), W->data.data(), gx);
        } else {
          TFUNET_DISPATCH(conv_transpose1d_backward_input, d, g, W->data.data(), gx);
        }
      }
      double* gw = grad_sink(W);
      double* gb = Bi ? grad_sink(Bi) : nullptr;
      if (gw) {
        TFUNET_DISPATCH(conv_transpose1d_backward_weight, d, g, X->data.data(), gw, gb);
      } else if (gb) {
        for (std::size_t b = 0; b < d.batch; ++b)
          for (std::size_t c = 0; c < d.out_channels; ++c)
            for (std::size_t l = 0; l < d.out_len; ++l) gb[c] += g[(b * d.out_channels + c) * d.out_len + l];
      }
    });
  }
  return out;
}

Tensor maxpool1d(const Tensor& x, std::size_t window) {
  require_rank("maxpool1d", x, 3);
  if (window == 0 || x.dim(2) % window != 0)
    throw ShapeError("maxpool1d: length " + std::to_string(x.dim(2)) + " not divisible by window " +
                     std::to_string(window));
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2), out_len = len / window;
  const bool track = tracking({&x});
  Tensor out = result({x.dim(0), x.dim(1), out_len}, track);
  std::vector<std::size_t> argmax(rows * out_len);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_len; ++o) {
      std::size_t best = r * len + o * window;
      for (std::size_t w = 1; w < window; ++w) {
        const std::size_t i = r * len + o * window + w;
        if (x[i] > x[best]) best = i;
      }
      argmax[r * out_len + o] = best;
      out[r * out_len + o] = x[best];
    }
  if (auto* mon = detail::branch_monitor())
    for (auto i : argmax) mon->note(i);
  if (track) {
    auto X = x.impl(), O = out.impl();
    record({x}, out, [X, O, argmax = std::move(argmax)] {
      double* gx = grad_sink(X);
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += O->grad[i];
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  require_rank("batch_norm", x, 3);
  const std::size_t batch = x.dim(0), channels = x.dim(1), len = x.dim(2);
  if (gamma.numel() != channels || beta.numel() != channels || running_mean.numel() != channels ||
      running_var.numel() != channels)
    throw ShapeError("batch_norm parameters", x.shape(), gamma.shape());
  const std::size_t count = batch * len;
  if (training && count < 2)
    throw std::invalid_argument("batch_norm: training mode needs batch*length >= 2, got " + std::to_string(count));

  std::vector<double> mu(channels), inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) s += x[(b * channels + c) * len + l];
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const double e = x[(b * channels + c) * len + l] - m;
          v += e * e;
        }
      const double var = v / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * m;
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * (v / static_cast<double>(count - 1));
    } else {
      mu[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  const bool track = tracking({&x, &gamma, &beta});
  Tensor out = result(x.shape(), track);
  std::vector<double> xhat(x.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = (b * channels + c) * len + l;
        xhat[i] = (x[i] - mu[c]) * inv_std[c];
        out[i] = gamma[c] * xhat[i] + beta[c];
      }
  if (track) {
    auto X = x.impl(), G = gamma.impl(), Be = beta.impl(), O = out.impl();
    record({x, gamma, beta}, out,
           [X, G, Be, O, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, channels, len, count, training] {
             const double* g = O->grad.data();
             double* gx = grad_sink(X);
             double* gg = grad_sink(G);
             double* gbeta = grad_sink(Be);
             for (std::size_t c = 0; c < channels; ++c) {
               double sum_g = 0.0, sum_gx = 0.0;
               for (std::size_t b = 0; b < batch; ++b)
                 for (std::size_t l = 0; l < len; ++l) {
                   const std::size_t i = (b * channels + c) * len + l;
                   sum_g += g[i];
                   sum_gx += g[i] * xhat[i];
                 }
               if (gg) gg[c] += sum_gx;
               if (gbeta) gbeta[c] += sum_g;
               if (!gx) continue;
               const double gam = G->data[c];
               const double n = static_cast<double>(count);
               for (std::size_t b = 0; b < batch; ++b)
                 for (std::size_t l = 0; l < len; ++l) {
                   const std::size_t i = (b * channels + c) * len + l;
                   if (training)
                     gx[i] += gam * inv_std[c] * (g[i] - sum_g / n - xhat[i] * sum_gx / n);
                   else
                     gx[i] += gam * inv_std[c] * g[i];
                 }
             }
           });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm", x.shape(), gamma.shape());
  const std::size_t rows = x.numel() / d;
  const bool track = tracking({&x, &gamma, &beta});
  Tensor out = result(x.shape(), track);
  std::vector<double> xhat(x.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += xr[j];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(v + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - m) * inv_std[r];
      out[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  if (track) {
    auto X = x.impl(), G = gamma.impl(), Be = beta.impl(), O = out.impl();
    record({x, gamma, beta}, out, [X, G, Be, O, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      const double* g = O->grad.data();
      double* gx = grad_sink(X);
      double* gg = grad_sink(G);
      double* gbeta = grad_sink(Be);
      const double f = fault_factor(FaultSite::layer_norm);
      std::vector<double> gh(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double sum_gh = 0.0, sum_ghx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t i = r * d + j;
          if (gg) gg[j] += g[i] * xhat[i];
          if (gbeta) gbeta[j] += g[i];
          gh[j] = g[i] * G->data[j];
          sum_gh += gh[j];
          sum_ghx += gh[j] * xhat[i];
        }
        if (!gx) continue;
        const double n = static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t i = r * d + j;
          gx[i] += f * inv_std[r] * (gh[j] - sum_gh / n - xhat[i] * sum_ghx / n);
        }
      }
    });
  }
  return out;
}

}  // namespace tfunet
