#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fd.hpp"
#include "tfunet/checkpoint.hpp"
#include "tfunet/config.hpp"
#include "tfunet/train.hpp"

using namespace tfunet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny() {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.transformer_layers = 1;
  cfg.input_len = 64;
  return cfg;
}

std::vector<data::SegmentPair> tiny_pairs(std::size_t count, std::size_t len) {
  std::vector<data::SegmentPair> out;
  for (std::size_t i = 0; i < count; ++i) {
    data::SegmentPair p;
    p.segment_id = "p" + std::to_string(i);
    auto c = testing::random_tensor({len}, 100 + i, false);
    auto n = testing::random_tensor({len}, 200 + i, false);
    p.clean.assign(c.data().begin(), c.data().end());
    p.noisy = p.clean;
    for (std::size_t j = 0; j < len; ++j) p.noisy[j] += 0.3 * n[j];
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST_CASE("checkpoint round trip restores parameters, buffers and optimizer") {
  const auto dir = fs::temp_directory_path() / "tfunet_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cfg = tiny();
  cfg.seed = 3;
  TFTransUNet1D a(cfg);
  std::vector<Tensor> params;
  for (auto& p : a.parameters()) params.push_back(p.tensor);
  optim::AdamW opt(params, {});
  a.forward(testing::random_tensor({2, 1, 64}, 1, false), true);  // touch BN buffers
  for (auto& p : params) std::fill(p.grad_buffer().begin(), p.grad_buffer().end(), 0.5);
  opt.step();
  ckpt::TrainState st;
  st.epoch = 4;
  st.best_epoch = 2;
  st.best_val = 0.25;
  st.rng_state = "1 2 3";
  ckpt::save(dir / "c", a, &opt, nlohmann::json{{"k", 1}}, st);

  cfg.seed = 9;
  TFTransUNet1D b(cfg);
  std::vector<Tensor> params_b;
  for (auto& p : b.parameters()) params_b.push_back(p.tensor);
  optim::AdamW opt_b(params_b, {});
  CHECK(ckpt::model_config(dir / "c").base_channels == 2);
  auto loaded = ckpt::load(dir / "c", b, &opt_b);
  CHECK(loaded.epoch == 4);
  CHECK(loaded.best_val == 0.25);
  CHECK(loaded.rng_state == "1 2 3");
  CHECK(opt_b.steps() == 1);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].tensor.numel(); ++j) CHECK(pa[i].tensor[j] == pb[i].tensor[j]);
  const auto ba = a.buffers(), bb = b.buffers();
  for (std::size_t i = 0; i < ba.size(); ++i)
    for (std::size_t j = 0; j < ba[i].tensor.numel(); ++j) CHECK(ba[i].tensor[j] == bb[i].tensor[j]);
  CHECK(opt.first_moments() == opt_b.first_moments());
  CHECK(opt.second_moments() == opt_b.second_moments());

  auto other = tiny();
  other.base_channels = 4;
  TFTransUNet1D c(other);
  CHECK_THROWS(ckpt::load(dir / "c", c, nullptr));
  CHECK_THROWS(ckpt::load(dir / "missing", b, nullptr));
}

TEST_CASE("config JSON round trip and overrides") {
  RunConfig cfg;
  cfg.epochs = 7;
  cfg.model.base_channels = 8;
  cfg.synth.noise = {"bw", "bw+em+ma"};
  auto back = from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  auto partial = from_json(nlohmann::json::parse(R"({"batch_size": 4, "model": {"heads": 2}})"));
  CHECK(partial.batch_size == 4);
  CHECK(partial.model.heads == 2);
  CHECK(partial.model.base_channels == 16);
  CHECK(partial.epochs == 100);
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"epoch": 4})")), ConfigError);
  RunConfig bad;
  bad.synth.noise = {"bogus"};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training: log, determinism, resume, early stop") {
  const auto root = fs::temp_directory_path() / "tfunet_test_train";
  fs::remove_all(root);
  RunConfig cfg;
  cfg.model = tiny();
  cfg.synth.window = 64;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.schedule.t_max = 4;
  const auto train_set = tiny_pairs(7, 64), val_set = tiny_pairs(2, 64);

  auto a = train::run(cfg, train_set, val_set, root / "a", false, nullptr);
  auto b = train::run(cfg, train_set, val_set, root / "b", false, nullptr);
  REQUIRE(a.history.size() == 4);
  CHECK(a.history.front().lr == cfg.schedule.eta_max);
  CHECK(a.history.back().train_total == b.history.back().train_total);
  CHECK(a.history.back().val_total == b.history.back().val_total);
  CHECK(fs::exists(root / "a" / "config.json"));
  CHECK(ckpt::exists(root / "a" / "best"));
  CHECK(ckpt::exists(root / "a" / "last"));

  // Two epochs, then resume for the remaining two.
  RunConfig half = cfg;
  half.epochs = 2;
  train::run(half, train_set, val_set, root / "c", false, nullptr);
  auto resumed = train::run(cfg, train_set, val_set, root / "c", true, nullptr);
  REQUIRE(resumed.history.size() == 2);
  CHECK(resumed.history.back().train_total == a.history.back().train_total);
  CHECK(resumed.history.back().val_total == a.history.back().val_total);
  std::ifstream log(root / "c" / "train_log.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 5);

  RunConfig lr_at_tmax = cfg;
  lr_at_tmax.epochs = 5;
  auto full = train::run(lr_at_tmax, train_set, val_set, root / "d", false, nullptr);
  CHECK(full.history.back().lr == 1e-6);

  RunConfig stop = cfg;
  stop.epochs = 30;
  stop.patience = 1;
  stop.schedule.eta_max = 1e-9;
  stop.schedule.eta_min = 1e-9;
  auto s = train::run(stop, train_set, val_set, root / "e", false, nullptr);
  CHECK(s.stopped_early);
  CHECK(s.history.size() < 30);

  auto wrong = tiny_pairs(2, 32);
  CHECK_THROWS_AS(train::run(cfg, wrong, {}, root / "f", false, nullptr), std::invalid_argument);
}

TEST_CASE("non-finite loss aborts training") {
  RunConfig cfg;
  cfg.model = tiny();
  cfg.synth.window = 64;
  cfg.epochs = 1;
  auto pairs = tiny_pairs(2, 64);
  pairs[0].noisy[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train::run(cfg, pairs, {}, fs::temp_directory_path() / "tfunet_test_nan", false, nullptr),
                  train::NumericError);
}

TEST_CASE("denoise_signal windowing and padding") {
  auto cfg = tiny();
  TFTransUNet1D model(cfg);
  auto sig = testing::random_tensor({128}, 5, false);
  std::vector<double> x(sig.data().begin(), sig.data().end());
  auto y = train::denoise_signal(model, x, false, 4);
  CHECK(y.size() == 128);
  CHECK(train::denoise_signal(model, x, false, 4) == y);
  std::vector<double> first(x.begin(), x.begin() + 64);
  auto y1 = train::denoise_signal(model, first, false, 4);
  for (std::size_t i = 0; i < 64; ++i) CHECK(y1[i] == y[i]);
  std::vector<double> odd(x.begin(), x.begin() + 100);
  CHECK_THROWS(train::denoise_signal(model, odd, false, 4));
  CHECK(train::denoise_signal(model, odd, true, 4).size() == 100);
}
