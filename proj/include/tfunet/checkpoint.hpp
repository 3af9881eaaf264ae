#pragma once

// Checkpoints: <prefix>.manifest.json (names, shapes, offsets, config, training
// state) next to <prefix>.params.bin (little-endian float64, manifest order).

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "json.hpp"
#include "tfunet/model.hpp"
#include "tfunet/optim.hpp"

namespace tfunet::ckpt {

struct TrainState {
  int epoch = 0;  // epochs completed
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
  int since_improvement = 0;
  std::string rng_state;  // textual std::mt19937_64 state
};

// Parameters and buffers always; AdamW moments when `opt` is given.
void save(const std::filesystem::path& prefix, const TFTransUNet1D& model, const optim::AdamW* opt,
          const nlohmann::json& run_config, const TrainState& state);

nlohmann::json read_manifest(const std::filesystem::path& prefix);

// Model config stored in a checkpoint.
ModelConfig model_config(const std::filesystem::path& prefix);

// Restores into `model` (and `opt` when given). Throws std::runtime_error on
// missing files, name/shape mismatch or a truncated payload.
TrainState load(const std::filesystem::path& prefix, TFTransUNet1D& model, optim::AdamW* opt);

bool exists(const std::filesystem::path& prefix);

}  // namespace tfunet::ckpt
