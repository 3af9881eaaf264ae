#include <cmath>

#include "doctest.h"
#include "tfunet/ops.hpp"
#include "tfunet/optim.hpp"

using namespace tfunet;
using namespace tfunet::optim;

namespace {

void set_grad(Tensor& p, double g) {
  auto& buf = p.grad_buffer();
  std::fill(buf.begin(), buf.end(), g);
}

}  // namespace

TEST_CASE("zero gradient, zero weight decay leaves parameters unchanged") {
  Tensor p = Tensor::from({3}, {1, -2, 3}, true);
  AdamW opt({p}, {.lr = 1e-3, .weight_decay = 0.0});
  set_grad(p, 0.0);
  opt.step();
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 3.0);
}

TEST_CASE("first step with unit gradient") {
  Tensor p = Tensor::from({2}, {0.5, -0.5}, true);
  AdamW opt({p}, {.lr = 1e-3, .weight_decay = 0.0});
  set_grad(p, 1.0);
  opt.step();
  const double expected = -1e-3 * (1.0 / (1.0 + 1e-8));
  CHECK(std::abs((p[0] - 0.5) - expected) < 1e-12);
  CHECK(std::abs((p[1] + 0.5) - expected) < 1e-12);
}

TEST_CASE("decoupled weight decay shrinks by 1 - lr wd per step") {
  Tensor p = Tensor::from({1}, {2.0}, true);
  AdamW opt({p}, {.lr = 0.01, .weight_decay = 0.1});
  double expected = 2.0;
  for (int i = 0; i < 5; ++i) {
    set_grad(p, 0.0);
    opt.step();
    expected *= 1.0 - 0.01 * 0.1;
  }
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("missing gradient is an error") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  AdamW opt({p}, {});
  CHECK_THROWS_AS(opt.step(), std::logic_error);
}

TEST_CASE("deterministic steps") {
  auto run = [] {
    Tensor p = Tensor::from({3}, {0.1, 0.2, 0.3}, true);
    AdamW opt({p}, {});
    for (int i = 0; i < 10; ++i) {
      auto& g = p.grad_buffer();
      for (std::size_t j = 0; j < 3; ++j) g[j] = std::sin(p[j] * (i + 1));
      opt.step();
    }
    return std::vector<double>(p.data().begin(), p.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("quadratic converges") {
  Tensor p = Tensor::from({1}, {3.0}, true);
  AdamW opt({p}, {.lr = 0.01, .weight_decay = 0.0});
  int steps = 0;
  for (; steps < 2000 && std::abs(p[0] - 1.0) > 1e-6; ++steps) {
    opt.zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      Tensor d = add_scalar(p, -1.0);
      backward(sum(mul(d, d)));
    }
    opt.step();
  }
  CHECK(std::abs(p[0] - 1.0) <= 1e-6);
  CHECK(steps <= 2000);
}

TEST_CASE("cosine schedule") {
  CosineSchedule s;
  CHECK(s.lr_at(0) == s.eta_max);
  CHECK(s.lr_at(100) == 1e-6);
  CHECK(s.lr_at(50) == (s.eta_max + 1e-6) / 2.0);
  CHECK(s.lr_at(150) == 1e-6);
  double prev = s.lr_at(0);
  for (int e = 1; e <= 100; ++e) {
    CHECK(s.lr_at(e) <= prev);
    prev = s.lr_at(e);
  }
  for (int e : {10, 33, 77}) {
    const double ref = 1e-6 + 0.5 * (1e-3 - 1e-6) * (1 + std::cos(M_PI * e / 100.0));
    CHECK(s.lr_at(e) == doctest::Approx(ref).epsilon(1e-14));
  }
}
