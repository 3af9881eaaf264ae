#include <cmath>

#include "doctest.h"
#include "fd.hpp"
#include "tfunet/nn.hpp"

using namespace tfunet;
using testing::fd_max_rel_error;
using testing::project;
using testing::random_tensor;

namespace {

std::vector<Tensor> with_params(Tensor x, const nn::NamedTensors& named) {
  std::vector<Tensor> out{x};
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

}  // namespace

TEST_CASE("layer shapes") {
  nn::Rng rng(1);
  nn::Conv1d conv(1, 4, 3, 1, 1, rng);
  CHECK(conv.forward(Tensor::zeros({2, 1, 20})).shape() == Shape{2, 4, 20});
  nn::ConvTranspose1d up(4, 2, 2, 2, rng);
  CHECK(up.forward(Tensor::zeros({2, 4, 10})).shape() == Shape{2, 2, 20});
  nn::MultiHeadSelfAttention attn(8, 2, rng);
  CHECK(attn.forward(Tensor::zeros({3, 5, 8})).shape() == Shape{3, 5, 8});
  CHECK(attn.forward(Tensor::zeros({5, 8})).shape() == Shape{5, 8});
  CHECK_THROWS_AS(nn::MultiHeadSelfAttention(10, 3, rng), std::invalid_argument);
  CHECK_THROWS(conv.forward(Tensor::zeros({2, 2, 20})));
}

TEST_CASE("attention rows are distributions") {
  nn::Rng rng(2);
  nn::MultiHeadSelfAttention attn(8, 2, rng);
  Tensor w;
  attn.forward(random_tensor({2, 6, 8}, 3, false), &w);
  REQUIRE(w.shape() == Shape{4, 6, 6});
  for (std::size_t r = 0; r < 24; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(w[r * 6 + j] >= 0.0);
      s += w[r * 6 + j];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("single-head attention equals softmax(QK^T/sqrt(d))V by hand") {
  nn::Rng rng(4);
  nn::MultiHeadSelfAttention attn(4, 1, rng);
  Tensor x = random_tensor({3, 4}, 5, false);
  Tensor y = attn.forward(x);
  auto proj = [&](const Tensor& w) {
    std::vector<double> out(12, 0.0);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < 4; ++i) out[t * 4 + j] += x[t * 4 + i] * w[i * 4 + j];
    return out;
  };
  const auto q = proj(attn.q.weight), k = proj(attn.k.weight), v = proj(attn.v.weight);
  std::vector<double> ctx(12, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    double s[3], mx = -1e300, z = 0.0;
    for (std::size_t u = 0; u < 3; ++u) {
      s[u] = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s[u] += q[t * 4 + j] * k[u * 4 + j];
      s[u] /= 2.0;  // sqrt(4)
      mx = std::max(mx, s[u]);
    }
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t j = 0; j < 4; ++j) ctx[t * 4 + j] += s[u] / z * v[u * 4 + j];
  }
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < 4; ++j) {
      double o = 0.0;
      for (std::size_t i = 0; i < 4; ++i) o += ctx[t * 4 + i] * attn.o.weight[i * 4 + j];
      CHECK(y[t * 4 + j] == doctest::Approx(o).epsilon(1e-12));
    }
}

TEST_CASE("positional encoding table") {
  Tensor pe = nn::positional_encoding(4, 6);
  CHECK(pe[0] == 0.0);
  CHECK(pe[1] == 1.0);
  CHECK(pe[1 * 6 + 0] == doctest::Approx(std::sin(1.0)));
  CHECK(pe[1 * 6 + 3] == doctest::Approx(std::cos(1.0 / std::pow(10000.0, 2.0 / 6.0))));
  CHECK_THROWS(nn::positional_encoding(4, 5));
}

TEST_CASE("layer gradients vs finite differences") {
  nn::Rng rng(6);
  SUBCASE("mhsa") {
    nn::MultiHeadSelfAttention attn(6, 3, rng);
    nn::NamedTensors p;
    attn.collect("a", p);
    Tensor x = random_tensor({2, 4, 6}, 7);
    CHECK(fd_max_rel_error([&] { return project(attn.forward(x), 8); }, with_params(x, p)) < 1e-6);
  }
  SUBCASE("ffn") {
    nn::FeedForward ffn(4, 16, rng);
    nn::NamedTensors p;
    ffn.collect("f", p);
    Tensor x = random_tensor({2, 3, 4}, 9);
    CHECK(fd_max_rel_error([&] { return project(ffn.forward(x), 10); }, with_params(x, p)) < 1e-6);
  }
  SUBCASE("transformer layer") {
    nn::TransformerEncoderLayer layer(4, 2, 16, rng);
    nn::NamedTensors p;
    layer.collect("l", p);
    Tensor x = random_tensor({2, 3, 4}, 11);
    CHECK(fd_max_rel_error([&] { return project(layer.forward(x), 12); }, with_params(x, p)) < 1e-6);
  }
}

TEST_CASE("post-norm layer output rows are normalized") {
  nn::Rng rng(13);
  nn::TransformerEncoderLayer layer(8, 2, 32, rng);
  Tensor y = layer.forward(random_tensor({2, 5, 8}, 14, false));
  for (std::size_t r = 0; r < 10; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < 8; ++j) m += y[r * 8 + j];
    m /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) v += (y[r * 8 + j] - m) * (y[r * 8 + j] - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 8.0 == doctest::Approx(1.0).epsilon(1e-3));
  }
}
