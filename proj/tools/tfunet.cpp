// tfunet: synth-data | train | denoise | evaluate | gradcheck
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tfunet/checkpoint.hpp"
#include "tfunet/config.hpp"
#include "tfunet/data.hpp"
#include "tfunet/gradcheck.hpp"
#include "tfunet/metrics.hpp"
#include "tfunet/train.hpp"

namespace fs = std::filesystem;
using namespace tfunet;

namespace {

constexpr int kOk = 0, kUsage = 1, kData = 2, kNumeric = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.model.seed = *c.seed;
  }
  return cfg;
}

int cmd_synth(RunConfig cfg, const std::string& out) {
  if (!out.empty()) cfg.data_dir = out;
  cfg.validate();
  const auto records = train::source_records(cfg);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  const auto split = data::split_records(ids, cfg.synth.val_fraction, cfg.synth.test_fraction, cfg.seed);
  const auto summary = data::build_dataset(records, train::dataset_plan(cfg), split, cfg.data_dir);
  save_config(cfg, fs::path(cfg.data_dir) / "config.json");
  std::cout << "wrote " << cfg.data_dir << ": train " << summary.train << ", val " << summary.val << ", test "
            << summary.test << " pairs (" << split.train.size() << "/" << split.val.size() << "/"
            << split.test.size() << " records)\n";
  return kOk;
}

fs::path split_dir(const fs::path& dir, const char* split) {
  if (fs::exists(dir / "manifest.json")) return dir;
  return dir / split;
}

int cmd_train(RunConfig cfg, bool overfit, bool resume) {
  cfg.validate();
  if (overfit) {
    std::vector<data::SegmentPair> pairs;
    const fs::path train_dir = split_dir(cfg.data_dir, "train");
    if (fs::exists(train_dir / "manifest.json")) {
      pairs = data::load_split(train_dir);
    } else {
      RunConfig small = cfg;
      small.synth.n_records = std::max<std::size_t>(1, cfg.overfit_batch);
      small.synth.record_seconds = static_cast<double>(cfg.model.input_len) / cfg.synth.fs;
      pairs = data::synthesize_pairs(train::source_records(small), train::dataset_plan(small));
    }
    const auto r = train::overfit_one_batch(cfg, pairs, 100.0, &std::cout);
    std::cout << "overfit: initial " << r.initial_loss << " best " << r.best_loss << " ratio " << r.ratio() << " after "
              << r.steps << " steps\n";
    if (r.steps_to_target == 0) {
      std::cout << "overfit: loss did not drop 100x within " << cfg.overfit_steps << " steps\n";
      return kNumeric;
    }
    std::cout << "overfit: reached 100x at step " << r.steps_to_target << '\n';
    return kOk;
  }
  const auto train_set = data::load_split(split_dir(cfg.data_dir, "train"));
  std::vector<data::SegmentPair> val_set;
  if (fs::exists(fs::path(cfg.data_dir) / "val" / "manifest.json")) val_set = data::load_split(fs::path(cfg.data_dir) / "val");
  const auto r = train::run(cfg, train_set, val_set, cfg.out_dir, resume, &std::cout);
  std::cout << "trained " << r.epochs_completed << " epochs; best val " << r.best_val << " at epoch " << r.best_epoch
            << (r.stopped_early ? " (early stop)" : "") << '\n';
  return kOk;
}

TFTransUNet1D load_model(const std::string& prefix) {
  TFTransUNet1D model(ckpt::model_config(prefix));
  ckpt::load(prefix, model, nullptr);
  return model;
}

int cmd_denoise(const std::string& checkpoint, const std::string& input, const std::string& out, bool pad) {
  auto model = load_model(checkpoint);
  auto rec = data::load_record(input);
  rec.samples = train::denoise_signal(model, rec.samples, pad, 16);
  // Output keeps the input's encoding regardless of the output extension.
  if (data::is_raw_path(input) != data::is_raw_path(out)) {
    std::cerr << "warning: writing " << (data::is_raw_path(input) ? "raw float64" : "CSV") << " to " << out << '\n';
  }
  if (data::is_raw_path(input)) {
    data::write_f64(out, rec.samples);
  } else {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write " + out);
    os.precision(17);
    for (double v : rec.samples) os << v << '\n';
  }
  std::cout << "denoised " << rec.samples.size() << " samples -> " << out << '\n';
  return kOk;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_dir, const std::string& out,
                 const std::string& baseline) {
  const auto pairs = data::load_split(split_dir(data_dir, "test"));
  if (pairs.empty()) throw std::invalid_argument("test set is empty");
  metrics::Denoiser fn;
  std::optional<TFTransUNet1D> model;
  if (baseline == "identity") {
    fn = [](const std::vector<std::vector<double>>& x) { return x; };
  } else if (!baseline.empty()) {
    throw ConfigError("unknown baseline '" + baseline + "' (expected identity)");
  } else {
    if (checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint or --baseline identity");
    model.emplace(load_model(checkpoint));
    fn = [&](const std::vector<std::vector<double>>& x) { return train::denoise_segments(*model, x, 16); };
  }
  const auto report = metrics::evaluate(fn, pairs, 16);
  std::cout << metrics::format_table(metrics::group_by_condition(report), report);
  if (!out.empty()) {
    metrics::write_segment_csv(report, out);
    std::cout << "per-segment metrics -> " << out << '\n';
  }
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault) {
  if (!fault.empty()) {
    static const std::pair<const char*, FaultSite> sites[] = {{"conv1d", FaultSite::conv1d},
                                                               {"conv_transpose1d", FaultSite::conv_transpose1d},
                                                               {"layer_norm", FaultSite::layer_norm},
                                                               {"softmax", FaultSite::softmax}};
    auto it = std::find_if(std::begin(sites), std::end(sites), [&](const auto& s) { return fault == s.first; });
    if (it == std::end(sites)) throw ConfigError("unknown fault site '" + fault + "'");
    inject_fault(it->second);
  }
  gradcheck::Options opt;
  opt.seed = seed;
  const auto results = gradcheck::run_all(opt);
  std::cout << gradcheck::format_report(results);
  const bool ok = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  std::cout << (ok ? "gradcheck: all components pass\n" : "gradcheck: FAILED\n");
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"1D Transformer U-Net ECG denoiser"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "global seed (also seeds model init)");
  };

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "synthesize a paired clean/noisy dataset");
  add_common(synth);
  std::string synth_out;
  std::vector<double> snrs;
  std::vector<std::string> noises;
  std::optional<std::size_t> n_records;
  std::optional<double> record_seconds;
  std::vector<std::string> inputs;
  synth->add_option("--out", synth_out, "dataset directory");
  synth->add_option("--snr", snrs, "target SNRs in dB (comma separated)")->delimiter(',');
  synth->add_option("--noise", noises, "noise mix such as bw,em,ma; repeat for several mixes");
  synth->add_option("--records", n_records, "number of synthetic records");
  synth->add_option("--record-seconds", record_seconds, "synthetic record duration");
  synth->add_option("--input", inputs, "CSV or raw float64 record files instead of synthetic ECG");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd);
  std::string train_out, train_data;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size, base_channels, layers;
  std::optional<double> w_spectral;
  bool overfit = false, resume = false;
  train_cmd->add_option("--out", train_out, "run directory");
  train_cmd->add_option("--data", train_data, "dataset directory");
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch-size", batch_size);
  train_cmd->add_option("--base-channels", base_channels);
  train_cmd->add_option("--transformer-layers", layers);
  train_cmd->add_option("--w-spectral", w_spectral);
  train_cmd->add_flag("--overfit-one-batch", overfit, "learning sanity check on a single batch");
  train_cmd->add_flag("--resume", resume, "continue from <out>/last checkpoint");

  // denoise
  auto* denoise = app.add_subcommand("denoise", "denoise a signal file");
  std::string den_ckpt, den_in, den_out;
  bool pad = false;
  denoise->add_option("--checkpoint", den_ckpt, "checkpoint prefix, e.g. runs/x/best")->required();
  denoise->add_option("--input", den_in)->required()->check(CLI::ExistingFile);
  denoise->add_option("--out", den_out)->required();
  denoise->add_flag("--pad", pad, "pad to a whole number of windows; padding is stripped");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "report metrics on a test split");
  std::string ev_ckpt, ev_data = "data", ev_out, baseline;
  eval->add_option("--checkpoint", ev_ckpt, "checkpoint prefix");
  eval->add_option("--data", ev_data, "dataset directory or split directory");
  eval->add_option("--out", ev_out, "per-segment CSV path");
  eval->add_option("--baseline", baseline, "evaluate a fixed baseline instead of a model")->check(CLI::IsMember({"identity"}));

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::uint64_t gc_seed = 0;
  std::string fault;
  gc->add_option("--seed", gc_seed);
  gc->add_option("--inject-fault", fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) {
      RunConfig cfg = resolve(common);
      if (!snrs.empty()) cfg.synth.snr_db = snrs;
      if (!noises.empty()) cfg.synth.noise = noises;
      if (n_records) cfg.synth.n_records = *n_records;
      if (record_seconds) cfg.synth.record_seconds = *record_seconds;
      if (!inputs.empty()) cfg.synth.inputs = inputs;
      return cmd_synth(cfg, synth_out);
    }
    if (*train_cmd) {
      RunConfig cfg = resolve(common);
      if (!train_out.empty()) cfg.out_dir = train_out;
      if (!train_data.empty()) cfg.data_dir = train_data;
      if (epochs) cfg.epochs = *epochs;
      if (batch_size) cfg.batch_size = *batch_size;
      if (base_channels) cfg.model.base_channels = *base_channels;
      if (layers) cfg.model.transformer_layers = *layers;
      if (w_spectral) cfg.loss.w_spectral = *w_spectral;
      return cmd_train(cfg, overfit, resume);
    }
    if (*denoise) return cmd_denoise(den_ckpt, den_in, den_out, pad);
    if (*eval) return cmd_evaluate(ev_ckpt, ev_data, ev_out, baseline);
    if (*gc) return cmd_gradcheck(gc_seed, fault);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const train::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
