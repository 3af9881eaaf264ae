#pragma once

// Denoising quality metrics and dataset-level evaluation.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tfunet/data.hpp"

namespace tfunet::metrics {

inline constexpr double kInfSnr = std::numeric_limits<double>::infinity();

// 10 log10(sum clean^2 / sum (test - clean)^2); +inf when the residual is zero.
double snr_db(std::span<const double> clean, std::span<const double> test);
// 100 sqrt(sum (clean - denoised)^2 / sum clean^2), no mean removal.
double prd_pct(std::span<const double> clean, std::span<const double> denoised);
double pcc(std::span<const double> a, std::span<const double> b);
double mae(std::span<const double> a, std::span<const double> b);

struct SegmentMetrics {
  std::string segment_id;
  std::string noise_mix;
  double target_snr_db = 0.0;
  double snr_in_db = 0.0;
  double snr_out_db = 0.0;
  double snri_db = 0.0;
  double prd_pct = 0.0;
  double pcc = 0.0;
  double mae = 0.0;
};

SegmentMetrics segment_metrics(std::span<const double> clean, std::span<const double> noisy,
                               std::span<const double> denoised);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
  std::size_t excluded = 0;  // non-finite values left out
};

Stat summarize(const std::vector<double>& values);

struct MetricReport {
  std::size_t n_segments = 0;
  Stat snr_in_db, snr_out_db, snri_db, prd_pct, pcc, mae;
  std::vector<SegmentMetrics> segments;
};

MetricReport aggregate(std::vector<SegmentMetrics> segments);

struct GroupReport {
  std::string noise_mix;
  double target_snr_db = 0.0;
  MetricReport report;
};

// One group per distinct (mix, target SNR), ordered by mix name then SNR.
std::vector<GroupReport> group_by_condition(const MetricReport& report);

// Maps a batch of noisy segments (each of equal length) to denoised ones.
using Denoiser = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<double>>&)>;

// Throws std::invalid_argument on an empty dataset.
MetricReport evaluate(const Denoiser& denoise, const std::vector<data::SegmentPair>& pairs,
                      std::size_t batch_size = 16);

void write_segment_csv(const MetricReport& report, const std::filesystem::path& path);
std::string format_table(const std::vector<GroupReport>& groups, const MetricReport& overall);

}  // namespace tfunet::metrics
