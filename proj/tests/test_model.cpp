#include <set>

#include "doctest.h"
#include "fd.hpp"
#include "tfunet/model.hpp"

using namespace tfunet;

TEST_CASE("forward preserves (B, 1, L)") {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.transformer_layers = 1;
  TFTransUNet1D model(cfg);
  for (std::size_t b : {1u, 2u}) {
    Tensor y = model.forward(testing::random_tensor({b, 1, 3600}, b, false), false);
    CHECK(y.shape() == Shape{b, 1, 3600});
  }
  CHECK_THROWS(model.forward(Tensor::zeros({1, 1, 3584}), false));
  CHECK_THROWS(model.forward(Tensor::zeros({1, 2, 3600}), false));
}

TEST_CASE("parameter count: closed form, enumeration and a hand count agree") {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.transformer_layers = 1;
  cfg.heads = 4;
  cfg.input_len = 64;
  TFTransUNet1D model(cfg);
  std::size_t enumerated = 0;
  std::set<std::string> names;
  for (const auto& p : model.parameters()) {
    enumerated += p.tensor.numel();
    CHECK(names.insert(p.name).second);
  }
  // Hand count for c = 2 (d = 32, d_ff = 128):
  //   double conv (cin, cout) = 3 cin cout + cout + 2 cout + 3 cout^2 + cout + 2 cout
  auto dc = [](std::size_t ci, std::size_t co) { return 3 * ci * co + 3 * co * co + 6 * co; };
  const std::size_t encoder = dc(1, 2) + dc(2, 4) + dc(4, 8) + dc(8, 16) + dc(16, 32);
  const std::size_t transformer = 4 * 32 * 32 + (32 * 128 + 128) + (128 * 32 + 32) + 4 * 32;
  auto up = [&](std::size_t ci, std::size_t co) { return ci * co * 2 + co + dc(2 * co, co); };
  const std::size_t decoder = up(32, 16) + up(16, 8) + up(8, 4) + up(4, 2);
  const std::size_t head = 2 + 1;
  const std::size_t hand = encoder + transformer + decoder + head;
  CHECK(enumerated == hand);
  CHECK(parameter_count(cfg) == hand);
  CHECK(model.num_parameters() == hand);
}

TEST_CASE("config validation") {
  ModelConfig cfg;
  cfg.input_len = 3601;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.input_len = 3600;
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.heads = 4;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("init is deterministic per seed") {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.transformer_layers = 1;
  cfg.input_len = 64;
  cfg.seed = 5;
  TFTransUNet1D a(cfg), b(cfg);
  cfg.seed = 6;
  TFTransUNet1D c(cfg);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool same = true, differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].tensor.numel(); ++j) {
      same = same && pa[i].tensor[j] == pb[i].tensor[j];
      differs = differs || pa[i].tensor[j] != pc[i].tensor[j];
    }
  CHECK(same);
  CHECK(differs);
}
