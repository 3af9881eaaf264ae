#pragma once

// Run configuration: JSON file plus command-line overrides.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfunet/loss.hpp"
#include "tfunet/model.hpp"
#include "tfunet/optim.hpp"

namespace tfunet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SynthConfig {
  std::size_t n_records = 20;
  double record_seconds = 60.0;
  double fs = 360.0;
  double bpm_min = 55.0;
  double bpm_max = 95.0;
  // Optional input signals (CSV or raw float64); when set, replaces synthesis.
  std::vector<std::string> inputs;
  std::vector<std::string> noise = {"bw+em+ma"};  // one entry per mix
  std::vector<double> snr_db = {0.0};
  std::size_t window = 3600;
  std::size_t stride = 3600;
  double mains_hz = 50.0;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  optim::AdamWConfig adam;  // adam.lr is replaced by the schedule each epoch
  optim::CosineSchedule schedule;
  SynthConfig synth;

  int epochs = 100;
  std::size_t batch_size = 16;
  int patience = 15;  // epochs without validation improvement; 0 disables
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "runs/default";

  std::size_t overfit_steps = 500;
  std::size_t overfit_batch = 4;
  double overfit_lr = 1e-3;

  // Throws ConfigError on the first invalid field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Fields absent from `j` keep the values in `base`. Unknown keys are errors.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

nlohmann::json model_config_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace tfunet
