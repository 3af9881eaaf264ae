#include "tfunet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "tfunet/checkpoint.hpp"
#include "tfunet/optim.hpp"

namespace tfunet::train {

namespace fs = std::filesystem;

namespace {

void check_lengths(const std::vector<data::SegmentPair>& pairs, std::size_t len, const char* what) {
  for (const auto& p : pairs) {
    if (p.clean.size() != len || p.noisy.size() != len)
      throw std::invalid_argument(std::string(what) + " segment '" + p.segment_id + "' has length " +
                                  std::to_string(p.clean.size()) + ", model expects " + std::to_string(len));
    for (std::size_t i = 0; i < len; ++i)
      if (!std::isfinite(p.clean[i]) || !std::isfinite(p.noisy[i]))
        throw NumericError(std::string(what) + " segment '" + p.segment_id + "' has a non-finite sample at " +
                           std::to_string(i));
  }
}

std::vector<Tensor> param_tensors(const TFTransUNet1D& model) {
  std::vector<Tensor> out;
  for (auto& p : model.parameters()) out.push_back(p.tensor);
  return out;
}

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("corrupt RNG state in checkpoint");
}

bool finite(const LossReport& r) {
  return std::isfinite(r.time_loss) && std::isfinite(r.spectral_loss) && std::isfinite(r.total);
}

}  // namespace

std::vector<data::SignalRecord> source_records(const RunConfig& cfg) {
  std::vector<data::SignalRecord> records;
  if (!cfg.synth.inputs.empty()) {
    for (const auto& p : cfg.synth.inputs) records.push_back(data::load_record(p));
    return records;
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> bpm(cfg.synth.bpm_min, cfg.synth.bpm_max);
  for (std::size_t i = 0; i < cfg.synth.n_records; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "rec%03zu", i);
    const double b = bpm(rng);
    records.push_back(data::synth_ecg(cfg.synth.record_seconds, cfg.synth.fs, b, rng(), id));
  }
  return records;
}

data::DatasetPlan dataset_plan(const RunConfig& cfg) {
  data::DatasetPlan plan;
  for (const auto& n : cfg.synth.noise) plan.mixes.push_back(data::parse_mix(n));
  plan.snrs_db = cfg.synth.snr_db;
  plan.window = cfg.synth.window;
  plan.stride = cfg.synth.stride;
  plan.seed = cfg.seed;
  plan.mains_hz = cfg.synth.mains_hz;
  return plan;
}

Batch make_batch(const std::vector<data::SegmentPair>& pairs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::size_t len = pairs.at(indices[0]).clean.size();
  std::vector<double> noisy, clean;
  noisy.reserve(indices.size() * len);
  clean.reserve(indices.size() * len);
  for (auto i : indices) {
    const auto& p = pairs.at(i);
    if (p.clean.size() != len) throw std::invalid_argument("make_batch: segments differ in length");
    noisy.insert(noisy.end(), p.noisy.begin(), p.noisy.end());
    clean.insert(clean.end(), p.clean.begin(), p.clean.end());
  }
  return {Tensor::from({indices.size(), 1, len}, std::move(noisy)), Tensor::from({indices.size(), 1, len}, std::move(clean))};
}

LossReport evaluate_loss(TFTransUNet1D& model, const std::vector<data::SegmentPair>& pairs, const LossConfig& loss,
                         std::size_t batch_size) {
  LossReport acc;
  if (pairs.empty()) {
    acc.time_loss = acc.spectral_loss = acc.total = std::numeric_limits<double>::quiet_NaN();
    return acc;
  }
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - start);
    const auto batch = make_batch(pairs, std::span(idx).subspan(start, n));
    const Tensor y = model.forward(batch.noisy, false);
    const auto [_, r] = total_loss(y, batch.clean, loss);
    acc.time_loss += r.time_loss * static_cast<double>(n);
    acc.spectral_loss += r.spectral_loss * static_cast<double>(n);
    acc.total += r.total * static_cast<double>(n);
  }
  const auto count = static_cast<double>(pairs.size());
  acc.time_loss /= count;
  acc.spectral_loss /= count;
  acc.total /= count;
  return acc;
}

TrainResult run(const RunConfig& cfg, const std::vector<data::SegmentPair>& train_set,
                const std::vector<data::SegmentPair>& val_set, const fs::path& run_dir, bool resume,
                std::ostream* progress) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  check_lengths(train_set, cfg.model.input_len, "training");
  check_lengths(val_set, cfg.model.input_len, "validation");

  fs::create_directories(run_dir);
  save_config(cfg, run_dir / "config.json");

  TFTransUNet1D model(cfg.model);
  optim::AdamWConfig adam = cfg.adam;
  adam.lr = cfg.schedule.lr_at(0);
  optim::AdamW opt(param_tensors(model), adam);
  std::mt19937_64 rng(cfg.seed ^ 0x7f4a7c159e3779b9ull);

  ckpt::TrainState state;
  if (resume && ckpt::exists(run_dir / "last")) {
    state = ckpt::load(run_dir / "last", model, &opt);
    rng_from_string(rng, state.rng_state);
    if (progress) *progress << "resuming after epoch " << state.epoch << '\n';
  }

  const fs::path log_path = run_dir / "train_log.csv";
  const bool new_log = !fs::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot open " + log_path.string());
  if (new_log) log << "epoch,lr,train_time,train_spectral,train_total,val_total\n";
  log << std::setprecision(17);

  const nlohmann::json cfg_json = to_json(cfg);
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.schedule.lr_at(epoch);
    opt.set_lr(lr);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    LossReport sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      const auto batch = make_batch(train_set, std::span(order).subspan(start, n));
      Tape tape;
      LossReport r;
      {
        TapeScope scope(tape);
        const Tensor y = model.forward(batch.noisy, true);
        auto [loss, rep] = total_loss(y, batch.clean, cfg.loss);
        r = rep;
        if (!finite(r)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                             std::to_string(start));
        }
        opt.zero_grad();
        backward(loss);
      }
      opt.step();
      sum.time_loss += r.time_loss * static_cast<double>(n);
      sum.spectral_loss += r.spectral_loss * static_cast<double>(n);
      sum.total += r.total * static_cast<double>(n);
    }
    const auto count = static_cast<double>(train_set.size());
    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_time = sum.time_loss / count;
    row.train_spectral = sum.spectral_loss / count;
    row.train_total = sum.total / count;
    row.val_total = val_set.empty() ? row.train_total : evaluate_loss(model, val_set, cfg.loss, cfg.batch_size).total;
    if (!std::isfinite(row.val_total)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));

    log << row.epoch << ',' << row.lr << ',' << row.train_time << ',' << row.train_spectral << ',' << row.train_total
        << ',' << row.val_total << '\n';
    log.flush();
    result.history.push_back(row);

    state.epoch = epoch + 1;
    if (row.val_total < state.best_val) {
      state.best_val = row.val_total;
      state.best_epoch = epoch;
      state.since_improvement = 0;
    } else {
      ++state.since_improvement;
    }
    state.rng_state = rng_to_string(rng);
    if (state.best_epoch == epoch) ckpt::save(run_dir / "best", model, &opt, cfg_json, state);
    ckpt::save(run_dir / "last", model, &opt, cfg_json, state);

    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *progress << "epoch " << epoch << " lr " << lr << " train " << row.train_total << " (time " << row.train_time
                << ", spectral " << row.train_spectral << ") val " << row.val_total << " [" << std::fixed
                << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::setprecision(6) << '\n';
    }
    if (cfg.patience > 0 && state.since_improvement >= cfg.patience) {
      result.stopped_early = true;
      if (progress) *progress << "early stop: no validation improvement for " << cfg.patience << " epochs\n";
      break;
    }
  }
  result.epochs_completed = state.epoch;
  result.best_epoch = state.best_epoch;
  result.best_val = state.best_val;
  return result;
}

OverfitResult overfit_one_batch(const RunConfig& cfg, const std::vector<data::SegmentPair>& pairs,
                                double target_ratio, std::ostream* progress) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("overfit: no segments");
  check_lengths(pairs, cfg.model.input_len, "overfit");
  TFTransUNet1D model(cfg.model);
  optim::AdamWConfig adam = cfg.adam;
  adam.lr = cfg.overfit_lr;
  optim::AdamW opt(param_tensors(model), adam);

  std::vector<std::size_t> idx(std::min(cfg.overfit_batch, pairs.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = make_batch(pairs, idx);

  OverfitResult res;
  for (std::size_t step = 0; step < cfg.overfit_steps; ++step) {
    Tape tape;
    double total = 0.0;
    {
      TapeScope scope(tape);
      const Tensor y = model.forward(batch.noisy, true);
      auto [loss, rep] = total_loss(y, batch.clean, cfg.loss);
      total = rep.total;
      if (!std::isfinite(total)) throw NumericError("non-finite loss at overfit step " + std::to_string(step));
      opt.zero_grad();
      backward(loss);
    }
    res.history.push_back(total);
    if (step == 0) res.initial_loss = res.best_loss = total;
    res.best_loss = std::min(res.best_loss, total);
    res.steps = step + 1;
    if (progress && (step % 25 == 0)) *progress << "step " << step << " loss " << total << '\n';
    if (res.initial_loss / res.best_loss >= target_ratio) {
      res.steps_to_target = step;
      break;
    }
    opt.step();
  }
  return res;
}

std::vector<std::vector<double>> denoise_segments(TFTransUNet1D& model, const std::vector<std::vector<double>>& segs,
                                                  std::size_t batch_size) {
  const std::size_t len = model.config().input_len;
  if (batch_size == 0) batch_size = 1;
  std::vector<std::vector<double>> out;
  out.reserve(segs.size());
  for (std::size_t start = 0; start < segs.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, segs.size() - start);
    std::vector<double> flat;
    flat.reserve(n * len);
    for (std::size_t i = start; i < start + n; ++i) {
      if (segs[i].size() != len)
        throw std::invalid_argument("segment length " + std::to_string(segs[i].size()) + " does not match model input " +
                                    std::to_string(len));
      flat.insert(flat.end(), segs[i].begin(), segs[i].end());
    }
    const Tensor y = model.forward(Tensor::from({n, 1, len}, std::move(flat)), false);
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(y.data().begin() + i * len, y.data().begin() + (i + 1) * len);
  }
  return out;
}

std::vector<double> denoise_signal(TFTransUNet1D& model, std::span<const double> samples, bool pad,
                                   std::size_t batch_size) {
  const std::size_t len = model.config().input_len;
  if (samples.empty()) throw std::invalid_argument("denoise: empty signal");
  std::vector<double> x(samples.begin(), samples.end());
  if (x.size() % len != 0) {
    if (!pad)
      throw std::invalid_argument("signal length " + std::to_string(x.size()) + " is not a multiple of " +
                                  std::to_string(len) + " (use --pad)");
    x.resize((x.size() / len + 1) * len, x.back());
  }
  const std::size_t windows = x.size() / len;
  std::vector<std::vector<double>> segs(windows);
  std::vector<double> means(windows), stds(windows);
  std::vector<bool> flat(windows, false);
  for (std::size_t w = 0; w < windows; ++w) {
    segs[w].assign(x.begin() + static_cast<std::ptrdiff_t>(w * len), x.begin() + static_cast<std::ptrdiff_t>((w + 1) * len));
    const double m = std::accumulate(segs[w].begin(), segs[w].end(), 0.0) / static_cast<double>(len);
    double v = 0.0;
    for (double s : segs[w]) v += (s - m) * (s - m);
    const double sd = std::sqrt(v / static_cast<double>(len));
    means[w] = m;
    stds[w] = sd;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) {
      flat[w] = true;
      std::fill(segs[w].begin(), segs[w].end(), 0.0);
      continue;
    }
    for (auto& s : segs[w]) s = (s - m) / sd;
  }
  const auto den = denoise_segments(model, segs, batch_size);
  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t i = 0; i < len; ++i)
      out.push_back(flat[w] ? x[w * len + i] : den[w][i] * stds[w] + means[w]);
  }
  out.resize(samples.size());
  return out;
}

}  // namespace tfunet::train
