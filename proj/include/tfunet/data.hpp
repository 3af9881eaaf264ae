#pragma once

// Paired clean/noisy segment synthesis: signal ingestion, a synthetic ECG
// stand-in, parametric noise models (baseline wander, electrode motion,
// muscle artifact, powerline), SNR-targeted mixing, sliding windows with
// z-normalization, and record-disjoint dataset splits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tfunet::data {

struct SignalRecord {
  std::string id;
  double fs = 360.0;
  std::vector<double> samples;

  // Throws std::invalid_argument on fs <= 0, empty or non-finite samples.
  void validate() const;
};

// Sum of five Gaussian bumps (P, Q, R, S, T) per beat, RR jitter <= 2%.
SignalRecord synth_ecg(double duration_s, double fs, double bpm, std::uint64_t seed, std::string id = "synth");

enum class NoiseKind { BW, EM, MA, PLI };

std::string to_string(NoiseKind k);
NoiseKind parse_noise_kind(std::string_view s);  // case-insensitive

// Sorted, duplicate-free set of noise kinds.
using NoiseMix = std::vector<NoiseKind>;
NoiseMix make_mix(std::vector<NoiseKind> kinds);
// Accepts "bw,em,ma" or "bw+em+ma".
NoiseMix parse_mix(std::string_view s);
std::string mix_name(const NoiseMix& mix);  // "BW+EM+MA"

struct NoiseSpec {
  NoiseKind kind = NoiseKind::BW;
  std::uint64_t seed = 0;
  double mains_hz = 50.0;    // PLI
  double em_rate_hz = 1.0;   // EM transient arrival rate
  double em_floor = 0.05;    // EM background noise std relative to unit transients
};

// Zero-mean noise of length n.
std::vector<double> generate_noise(const NoiseSpec& spec, std::size_t n, double fs);

// Components normalized to unit power, summed, then re-centred; the sum is
// what gets scaled to the target SNR.
std::vector<double> generate_mix(const NoiseMix& mix, std::uint64_t seed, std::size_t n, double fs,
                                 double mains_hz = 50.0);

struct MixResult {
  std::vector<double> noisy;
  double scale = 0.0;
};

// noisy = clean + a * noise with a = sqrt(P_clean / (P_noise 10^(snr/10))),
// P = mean square.
MixResult mix_at_snr(std::span<const double> clean, std::span<const double> noise, double target_snr_db);

double mean_square(std::span<const double> x);

struct Window {
  std::size_t offset = 0;
  std::vector<double> samples;  // z-normalized
  double mean = 0.0;
  double std = 1.0;  // population std of the raw window
};

// Windows at offsets 0, stride, 2*stride, ...; zero-variance windows are
// skipped with a warning on stderr.
std::vector<Window> segment_and_normalize(const SignalRecord& rec, std::size_t window = 3600,
                                          std::size_t stride = 3600);

// Stable per-segment seed derived from its provenance.
std::uint64_t segment_seed(std::uint64_t global_seed, std::string_view record_id, std::size_t offset,
                           double snr_db, const NoiseMix& mix);

struct SegmentPair {
  std::string segment_id;
  std::vector<double> clean;
  std::vector<double> noisy;
  std::string record_id;
  std::size_t offset = 0;
  NoiseMix noise_mix;
  double target_snr_db = 0.0;
  std::uint64_t seed = 0;
  double scale = 0.0;
  double clean_mean = 0.0;
  double clean_std = 1.0;
};

struct DatasetPlan {
  std::vector<NoiseMix> mixes;
  std::vector<double> snrs_db;
  std::size_t window = 3600;
  std::size_t stride = 3600;
  std::uint64_t seed = 0;
  double mains_hz = 50.0;
};

struct SplitAssignment {
  std::vector<std::string> train, val, test;
  // Throws std::invalid_argument if any record id is in two splits.
  void validate() const;
};

// Assigns record ids to splits by fraction after a seeded shuffle.
SplitAssignment split_records(std::vector<std::string> ids, double val_fraction, double test_fraction,
                              std::uint64_t seed);

// Pipeline per record: window -> z-normalize clean -> seeded noise -> mix.
// Order: record, window, mix, snr. Parallel over segments; output does not
// depend on the thread count.
std::vector<SegmentPair> synthesize_pairs(const std::vector<SignalRecord>& records, const DatasetPlan& plan);

struct DatasetSummary {
  std::size_t train = 0, val = 0, test = 0;
};

// Writes <out>/dataset.json and <out>/{train,val,test}/manifest.json with one
// <index>.f64 file per pair (clean then noisy, little-endian float64).
DatasetSummary build_dataset(const std::vector<SignalRecord>& records, const DatasetPlan& plan,
                             const SplitAssignment& split, const std::filesystem::path& out_dir);

// Loads every pair listed in <dir>/manifest.json.
std::vector<SegmentPair> load_split(const std::filesystem::path& dir);

// CSV (one value per line) or raw little-endian float64 (.f64/.bin/.raw),
// with an optional JSON sidecar <stem>.json holding {id, fs}.
SignalRecord load_record(const std::filesystem::path& path);
void save_record(const SignalRecord& rec, const std::filesystem::path& path);

bool is_raw_path(const std::filesystem::path& path);
std::vector<double> read_f64(const std::filesystem::path& path);
void write_f64(const std::filesystem::path& path, std::span<const double> values);

}  // namespace tfunet::data
