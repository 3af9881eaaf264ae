#pragma once

// Training loop, single-batch overfit harness and inference helpers.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "tfunet/config.hpp"
#include "tfunet/data.hpp"
#include "tfunet/loss.hpp"
#include "tfunet/model.hpp"

namespace tfunet::train {

// Non-finite loss; training stops immediately.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Records listed in cfg.synth.inputs, or cfg.synth.n_records synthetic ECGs
// with heart rates drawn from [bpm_min, bpm_max] under cfg.seed.
std::vector<data::SignalRecord> source_records(const RunConfig& cfg);
data::DatasetPlan dataset_plan(const RunConfig& cfg);

struct Batch {
  Tensor noisy;  // B x 1 x L
  Tensor clean;
};

Batch make_batch(const std::vector<data::SegmentPair>& pairs, std::span<const std::size_t> indices);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_time = 0.0;
  double train_spectral = 0.0;
  double train_total = 0.0;
  double val_total = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> history;  // epochs run in this invocation
  int epochs_completed = 0;
  int best_epoch = -1;
  double best_val = 0.0;
  bool stopped_early = false;
};

// Writes into run_dir: config.json, train_log.csv (appended), best.* and
// last.* checkpoints. With `resume`, continues from last.* if present.
TrainResult run(const RunConfig& cfg, const std::vector<data::SegmentPair>& train_set,
                const std::vector<data::SegmentPair>& val_set, const std::filesystem::path& run_dir, bool resume,
                std::ostream* progress);

// Eval-mode loss averaged over segments; no tape is recorded.
LossReport evaluate_loss(TFTransUNet1D& model, const std::vector<data::SegmentPair>& pairs, const LossConfig& loss,
                         std::size_t batch_size);

struct OverfitResult {
  double initial_loss = 0.0;
  double best_loss = 0.0;
  std::size_t steps = 0;          // steps run
  std::size_t steps_to_target = 0;  // 0 if the target ratio was never reached
  double ratio() const { return initial_loss / best_loss; }
  std::vector<double> history;  // loss before each step
};

// Repeated AdamW steps (lr = cfg.overfit_lr, no schedule) on the first
// cfg.overfit_batch pairs; stops once the loss fell by `target_ratio`.
OverfitResult overfit_one_batch(const RunConfig& cfg, const std::vector<data::SegmentPair>& pairs,
                                double target_ratio, std::ostream* progress);

// Eval-mode forward over normalized segments of length input_len.
std::vector<std::vector<double>> denoise_segments(TFTransUNet1D& model, const std::vector<std::vector<double>>& segs,
                                                  std::size_t batch_size);

// Splits a raw signal into input_len windows, z-normalizes each, denoises and
// restores the window's mean and std. Lengths that are not a multiple of
// input_len are padded with the last sample when `pad` is set and rejected
// otherwise; padding is removed from the result.
std::vector<double> denoise_signal(TFTransUNet1D& model, std::span<const double> samples, bool pad,
                                   std::size_t batch_size);

}  // namespace tfunet::train
