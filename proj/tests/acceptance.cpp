// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run criteria 1..8
//   acceptance 3 7        run a subset
//
// Exit status is 0 only if every selected criterion passes.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tfunet/checkpoint.hpp"
#include "tfunet/config.hpp"
#include "tfunet/data.hpp"
#include "tfunet/fft.hpp"
#include "tfunet/gradcheck.hpp"
#include "tfunet/loss.hpp"
#include "tfunet/metrics.hpp"
#include "tfunet/model.hpp"
#include "tfunet/optim.hpp"
#include "tfunet/train.hpp"

namespace fs = std::filesystem;
using namespace tfunet;

namespace {

// Pinned thresholds.
constexpr double kForwardBudgetS = 10.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetS = 60.0;
constexpr double kSpectralValueTol = 1e-8;
constexpr double kSpectralGradTol = 1e-6;
constexpr double kParsevalTol = 1e-8;
constexpr double kMetricTol = 1e-10;
constexpr double kPrdSnrTol = 1e-9;
constexpr double kSnrTol = 1e-9;
constexpr double kOverfitRatio = 100.0;
constexpr std::size_t kOverfitSteps = 500;
constexpr double kOverfitBudgetS = 300.0;
constexpr double kMinSnri = 3.0;
constexpr double kMinPcc = 0.90;
constexpr int kMaxEpochs = 30;
constexpr double kDenoiseBudgetS = 1800.0;
constexpr double kAdamTol = 1e-12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tfunet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1 ---------------------------------------------------------------------------

Outcome shape_contract() {
  ModelConfig cfg;
  cfg.base_channels = 16;
  TFTransUNet1D model(cfg);
  bool shapes = true;
  double t_b2 = 0.0;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  for (std::size_t b : {1, 2, 16}) {
    auto x = Tensor::from({b, 1, cfg.input_len}, uniform(b * cfg.input_len, b));
    const auto t0 = Clock::now();
    const Tensor y = model.forward(x, false);
    if (b == 2) t_b2 = seconds_since(t0);
    shapes = shapes && y.shape() == Shape{b, 1, cfg.input_len};
  }
  omp_set_num_threads(saved);
  return {shapes && t_b2 < kForwardBudgetS,
          fmt("(B,1,3600)->(B,1,3600) for B in {1,2,16}: %s; B=2 c=16 forward on 1 thread %.2f s (limit %.0f s)",
              shapes ? "exact" : "MISMATCH", t_b2, kForwardBudgetS)};
}

// 2 ---------------------------------------------------------------------------

Outcome gradient_suite() {
  gradcheck::Options opt;
  opt.tolerance = kGradTol;
  const auto t0 = Clock::now();
  const auto results = gradcheck::run_all(opt);
  const double secs = seconds_since(t0);
  bool all = true;
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& r : results) {
    all = all && r.passed;
    if (!r.passed) failed += " " + r.component;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = r.component;
    }
  }
  return {all && secs < kGradBudgetS,
          fmt("%zu components, eps %.0e, worst rel err %.2e (%s), %.1f s (limit %.0f s)%s%s", results.size(), opt.eps,
              worst, worst_name.c_str(), secs, kGradBudgetS, failed.empty() ? "" : "; failed:", failed.c_str())};
}

// 3 ---------------------------------------------------------------------------

// (1/K) sum over one-sided bins of (|Y|-|Yhat|)^2 by direct summation, averaged over rows.
double spectral_oracle(const std::vector<double>& yh, const std::vector<double>& y, std::size_t rows, std::size_t n) {
  const std::size_t k_bins = n / 2 + 1;
  long double total = 0.0L;
  for (std::size_t r = 0; r < rows; ++r) {
    long double row = 0.0L;
    for (std::size_t k = 0; k < k_bins; ++k) {
      std::complex<long double> a = 0.0L, b = 0.0L;
      for (std::size_t t = 0; t < n; ++t) {
        const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * t) % n) /
                                static_cast<long double>(n);
        const std::complex<long double> w(std::cos(ang), std::sin(ang));
        a += static_cast<long double>(y[r * n + t]) * w;
        b += static_cast<long double>(yh[r * n + t]) * w;
      }
      const long double d = std::abs(a) - std::abs(b);
      row += d * d;
    }
    total += row / static_cast<long double>(k_bins);
  }
  return static_cast<double>(total / static_cast<long double>(rows));
}

Outcome spectral_correctness() {
  double worst_value = 0.0, worst_grad = 0.0, worst_parseval = 0.0;
  for (std::size_t n : {16, 225, 3600}) {
    const std::size_t rows = 2;
    auto yv = uniform(rows * n, 10 + n), yhv = uniform(rows * n, 20 + n);
    auto y = Tensor::from({rows, 1, n}, yv);
    auto yh = Tensor::from({rows, 1, n}, yhv, true);
    const double got = spectral_loss(yh, y).item();
    const double want = spectral_oracle(yhv, yv, rows, n);
    worst_value = std::max(worst_value, std::abs(got - want) / std::max(1.0, std::abs(want)));

    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> x(yv.begin() + r * n, yv.begin() + (r + 1) * n);
      const auto spec = fft::dft(x);
      long double freq = 0.0L, time = 0.0L;
      for (const auto& c : spec) freq += static_cast<long double>(std::norm(c));
      for (double v : x) time += static_cast<long double>(v) * v;
      freq /= static_cast<long double>(n);
      worst_parseval = std::max(worst_parseval, static_cast<double>(std::abs(freq - time) / std::max(1.0L, time)));
    }

    // Analytic gradient against Richardson-extrapolated central differences.
    Tape tape;
    {
      TapeScope scope(tape);
      backward(spectral_loss(yh, y));
    }
    const std::vector<double> g(yh.grad().begin(), yh.grad().end());
    auto f = [&] { return spectral_loss(yh, y).item(); };
    const std::size_t probes = n == 16 ? rows * n : 24;
    std::mt19937_64 pick(n);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t i = n == 16 ? p : pick() % (rows * n);
      auto& xi = yh.data()[i];
      const double x0 = xi, h = 1e-4;
      auto central = [&](double e) {
        xi = x0 + e;
        const double fp = f();
        xi = x0 - e;
        const double fm = f();
        xi = x0;
        return (fp - fm) / (2.0 * e);
      };
      const double num = (4.0 * central(h / 2) - central(h)) / 3.0;
      const double denom = std::max({std::abs(g[i]), std::abs(num), 1e-8});
      worst_grad = std::max(worst_grad, std::abs(g[i] - num) / denom);
    }
  }
  const bool pass = worst_value < kSpectralValueTol && worst_grad < kSpectralGradTol && worst_parseval < kParsevalTol;
  return {pass, fmt("N in {16,225,3600}: value vs direct DFT %.1e (limit %.0e), gradient vs FD %.1e (limit %.0e), "
                    "Parseval %.1e (limit %.0e)",
                    worst_value, kSpectralValueTol, worst_grad, kSpectralGradTol, worst_parseval, kParsevalTol)};
}

// 4 ---------------------------------------------------------------------------

struct BruteMetrics {
  long double snr_in, snr_out, snri, prd, pcc, mae;
};

BruteMetrics brute(const std::vector<double>& c, const std::vector<double>& x, const std::vector<double>& d) {
  const std::size_t n = c.size();
  long double pc = 0, pin = 0, pout = 0, ab = 0, mc = 0, md = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pc += (long double)c[i] * c[i];
    pin += ((long double)x[i] - c[i]) * ((long double)x[i] - c[i]);
    pout += ((long double)d[i] - c[i]) * ((long double)d[i] - c[i]);
    ab += std::abs((long double)d[i] - c[i]);
    mc += c[i];
    md += d[i];
  }
  mc /= n;
  md /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (c[i] - mc) * (d[i] - md);
    sxx += (c[i] - mc) * (c[i] - mc);
    syy += (d[i] - md) * (d[i] - md);
  }
  BruteMetrics m;
  m.snr_in = 10.0L * std::log10(pc / pin);
  m.snr_out = 10.0L * std::log10(pc / pout);
  m.snri = m.snr_out - m.snr_in;
  m.prd = 100.0L * std::sqrt(pout / pc);
  m.pcc = sxy / std::sqrt(sxx * syy);
  m.mae = ab / n;
  return m;
}

Outcome metric_oracles() {
  double worst = 0.0, worst_identity = 0.0, worst_prd_snr = 0.0;
  std::vector<data::SegmentPair> pairs;
  for (std::size_t s = 0; s < 100; ++s) {
    const std::size_t n = 64 + 37 * s;
    auto c = uniform(n, 3 * s + 1), noise = uniform(n, 3 * s + 2), mid = uniform(n, 3 * s + 3);
    std::vector<double> x(n), d(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = c[i] + 0.7 * noise[i];
      d[i] = c[i] + 0.2 * mid[i] + 0.05;
    }
    const auto got = metrics::segment_metrics(c, x, d);
    const auto want = brute(c, x, d);
    auto rel = [](double a, long double b) {
      return static_cast<double>(std::abs(a - b) / std::max(1e-300L, std::abs(b)));
    };
    for (double e : {rel(got.snr_in_db, want.snr_in), rel(got.snr_out_db, want.snr_out), rel(got.snri_db, want.snri),
                     rel(got.prd_pct, want.prd), rel(got.pcc, want.pcc), rel(got.mae, want.mae)})
      worst = std::max(worst, e);
    worst_prd_snr = std::max(worst_prd_snr, std::abs(got.snr_out_db + 20.0 * std::log10(got.prd_pct / 100.0)));
    data::SegmentPair p;
    p.segment_id = std::to_string(s);
    p.clean = c;
    p.noisy = x;
    pairs.push_back(std::move(p));
  }
  const auto report = metrics::evaluate([](const auto& batch) { return batch; }, pairs, 16);
  bool identity_exact = true;
  for (const auto& s : report.segments) {
    identity_exact = identity_exact && s.snri_db == 0.0;
    worst_identity = std::max(worst_identity, std::abs(s.snri_db));
  }
  const bool pass = worst < kMetricTol && identity_exact && worst_prd_snr < kPrdSnrTol;
  return {pass, fmt("100 pairs: max rel err vs brute force %.1e (limit %.0e); identity SNRI max |%.1e| (exact 0 "
                    "required); PRD-SNR identity %.1e dB (limit %.0e)",
                    worst, kMetricTol, worst_identity, worst_prd_snr, kPrdSnrTol)};
}

// 5 ---------------------------------------------------------------------------

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(is),
                                                  std::istreambuf_iterator<char>()};
  }
  return out;
}

Outcome data_protocol() {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.synth.n_records = 6;
  cfg.synth.record_seconds = 20.0;
  cfg.synth.noise = {"bw", "em", "ma", "pli", "bw+em+ma"};
  cfg.synth.snr_db = {0.0, 5.0, 10.0};
  const auto records = train::source_records(cfg);
  const auto plan = train::dataset_plan(cfg);
  const auto pairs = data::synthesize_pairs(records, plan);
  double worst = 0.0;
  std::set<std::pair<std::string, double>> conditions;
  for (const auto& p : pairs) {
    worst = std::max(worst, std::abs(metrics::snr_db(p.clean, p.noisy) - p.target_snr_db));
    conditions.insert({data::mix_name(p.noise_mix), p.target_snr_db});
  }
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  const auto split = data::split_records(ids, cfg.synth.val_fraction, cfg.synth.test_fraction, cfg.seed);
  const auto a = scratch("data_a"), b = scratch("data_b");
  data::build_dataset(records, plan, split, a);
  data::build_dataset(train::source_records(cfg), train::dataset_plan(cfg), split, b);
  const auto ta = tree_bytes(a), tb = tree_bytes(b);
  const bool identical = !ta.empty() && ta == tb;
  fs::remove_all(a);
  fs::remove_all(b);
  const bool pass = worst < kSnrTol && conditions.size() == 15 && identical;
  return {pass, fmt("%zu pairs over %zu (mix, SNR) conditions: max |SNR - target| %.1e dB (limit %.0e); rebuild of %zu "
                    "files %s",
                    pairs.size(), conditions.size(), worst, kSnrTol, ta.size(),
                    identical ? "byte-identical" : "DIFFERS")};
}

// 6 ---------------------------------------------------------------------------

Outcome learning_sanity() {
  RunConfig cfg;
  cfg.model.base_channels = 4;
  cfg.model.transformer_layers = 1;
  cfg.overfit_steps = kOverfitSteps;
  cfg.overfit_batch = 4;
  cfg.overfit_lr = 1e-3;
  RunConfig src = cfg;
  src.synth.n_records = cfg.overfit_batch;
  src.synth.record_seconds = static_cast<double>(cfg.model.input_len) / cfg.synth.fs;
  const auto pairs = data::synthesize_pairs(train::source_records(src), train::dataset_plan(src));
  const auto t0 = Clock::now();
  const auto r = train::overfit_one_batch(cfg, pairs, kOverfitRatio, nullptr);
  const double secs = seconds_since(t0);
  const bool pass = r.steps_to_target > 0 && r.steps_to_target <= kOverfitSteps && secs < kOverfitBudgetS;
  return {pass, fmt("c=4, N=1, batch 4: loss %.4g -> %.4g (%.0fx) %s, %.0f s (limit %.0f s)", r.initial_loss,
                    r.best_loss, r.ratio(),
                    r.steps_to_target ? fmt("at step %zu", r.steps_to_target).c_str() : "not reached in 500 steps",
                    secs, kOverfitBudgetS)};
}

// 7 ---------------------------------------------------------------------------

struct DenoiseRun {
  metrics::MetricReport report;
  double test_spectral = 0.0;
  int epochs = 0;
};

DenoiseRun train_and_test(RunConfig cfg, const fs::path& data_dir, const fs::path& run_dir) {
  const auto train_set = data::load_split(data_dir / "train");
  const auto val_set = data::load_split(data_dir / "val");
  const auto test_set = data::load_split(data_dir / "test");
  const auto r = train::run(cfg, train_set, val_set, run_dir, false, &std::cerr);
  TFTransUNet1D model(ckpt::model_config(run_dir / "best"));
  ckpt::load(run_dir / "best", model, nullptr);
  DenoiseRun out;
  out.epochs = r.epochs_completed;
  out.report = metrics::evaluate(
      [&](const auto& segs) { return train::denoise_segments(model, segs, cfg.batch_size); }, test_set,
      cfg.batch_size);
  out.test_spectral = train::evaluate_loss(model, test_set, cfg.loss, cfg.batch_size).spectral_loss;
  return out;
}

Outcome desk_denoising() {
  RunConfig cfg;
  cfg.seed = 1;
  cfg.model.seed = 1;
  cfg.model.base_channels = 8;
  cfg.model.transformer_layers = 1;
  cfg.synth.n_records = 20;
  cfg.synth.noise = {"bw+em+ma"};
  cfg.synth.snr_db = {0.0};
  cfg.epochs = kMaxEpochs;
  cfg.schedule.t_max = kMaxEpochs;
  cfg.batch_size = 4;
  cfg.patience = 0;

  const auto t0 = Clock::now();
  const auto root = scratch("denoise");
  const auto records = train::source_records(cfg);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  const auto split = data::split_records(ids, cfg.synth.val_fraction, cfg.synth.test_fraction, cfg.seed);
  data::build_dataset(records, train::dataset_plan(cfg), split, root / "data");

  RunConfig dual = cfg, time_only = cfg;
  dual.loss.w_spectral = 0.1;
  time_only.loss.w_spectral = 0.0;
  const auto a = train_and_test(dual, root / "data", root / "dual");
  const auto b = train_and_test(time_only, root / "data", root / "time_only");
  const double secs = seconds_since(t0);

  const double snri = a.report.snri_db.mean, pc = a.report.pcc.mean;
  const bool pass = snri >= kMinSnri && pc >= kMinPcc && a.test_spectral <= b.test_spectral && secs < kDenoiseBudgetS;
  return {pass, fmt("c=8, N=1, %d epochs, %zu test segments: w_spectral=0.1 SNRI %.2f dB (min %.1f), PCC %.4f (min "
                    "%.2f), test spectral %.4g vs %.4g with w_spectral=0 (SNRI %.2f dB, PCC %.4f); %.0f s (limit %.0f s)",
                    a.epochs, a.report.n_segments, snri, kMinSnri, pc, kMinPcc, a.test_spectral, b.test_spectral,
                    b.report.snri_db.mean, b.report.pcc.mean, secs, kDenoiseBudgetS)};
}

// 8 ---------------------------------------------------------------------------

Outcome schedule_and_optimizer() {
  optim::CosineSchedule s;  // eta_max 1e-3, eta_min 1e-6, T_max 100
  const bool lr_exact = s.lr_at(0) == s.eta_max && s.lr_at(50) == (s.eta_max + 1e-6) / 2.0 && s.lr_at(100) == 1e-6;

  optim::AdamWConfig c;
  const double theta0 = 0.5, g = 0.2;
  auto p = Tensor::from({1}, {theta0}, true);
  p.grad_buffer()[0] = g;
  optim::AdamW opt({p}, c);
  opt.step();
  // m_hat = g, v_hat = g^2 after bias correction.
  const double want = theta0 - c.lr * (g / (std::abs(g) + c.eps) + c.weight_decay * theta0);
  const double err = std::abs(p.data()[0] - want);
  return {lr_exact && err < kAdamTol,
          fmt("lr(0, 50, 100) = (%.17g, %.17g, %.17g) %s; AdamW first step |err| %.1e (limit %.0e)", s.lr_at(0),
              s.lr_at(50), s.lr_at(100), lr_exact ? "exact" : "NOT EXACT", err, kAdamTol)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"shape contract", shape_contract},
      {"gradient suite", gradient_suite},
      {"spectral loss", spectral_correctness},
      {"metric oracles", metric_oracles},
      {"data protocol", data_protocol},
      {"learning sanity", learning_sanity},
      {"desk-scale denoising", desk_denoising},
      {"scheduler/optimizer", schedule_and_optimizer},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
