#include "tfunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tfunet::metrics {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
}

double energy(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

double residual_energy(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

double snr_db(std::span<const double> clean, std::span<const double> test) {
  check_lengths(clean, test, "snr_db");
  const double pc = energy(clean);
  if (!(pc > 0.0)) throw std::invalid_argument("snr_db: clean signal has zero power");
  const double pr = residual_energy(clean, test);
  if (pr == 0.0) return kInfSnr;
  return 10.0 * std::log10(pc / pr);
}

double prd_pct(std::span<const double> clean, std::span<const double> denoised) {
  check_lengths(clean, denoised, "prd_pct");
  const double pc = energy(clean);
  if (!(pc > 0.0)) throw std::invalid_argument("prd_pct: clean signal has zero power");
  return 100.0 * std::sqrt(residual_energy(clean, denoised) / pc);
}

double pcc(std::span<const double> a, std::span<const double> b) {
  check_lengths(a, b, "pcc");
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw std::invalid_argument("pcc: input has zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mae(std::span<const double> a, std::span<const double> b) {
  check_lengths(a, b, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

SegmentMetrics segment_metrics(std::span<const double> clean, std::span<const double> noisy,
                               std::span<const double> denoised) {
  SegmentMetrics m;
  m.snr_in_db = snr_db(clean, noisy);
  m.snr_out_db = snr_db(clean, denoised);
  m.snri_db = m.snr_out_db - m.snr_in_db;
  if (std::isinf(m.snr_in_db) && std::isinf(m.snr_out_db)) m.snri_db = 0.0;
  m.prd_pct = prd_pct(clean, denoised);
  m.pcc = pcc(clean, denoised);
  m.mae = mae(clean, denoised);
  return m;
}

Stat summarize(const std::vector<double>& values) {
  Stat s;
  double acc = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) {
      ++s.excluded;
      continue;
    }
    acc += v;
    ++s.count;
  }
  if (s.count == 0) {
    s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = acc / static_cast<double>(s.count);
  double var = 0.0;
  for (double v : values)
    if (std::isfinite(v)) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(s.count));
  return s;
}

MetricReport aggregate(std::vector<SegmentMetrics> segments) {
  MetricReport r;
  r.n_segments = segments.size();
  auto column = [&](double SegmentMetrics::*field) {
    std::vector<double> v;
    v.reserve(segments.size());
    for (const auto& s : segments) v.push_back(s.*field);
    return summarize(v);
  };
  r.snr_in_db = column(&SegmentMetrics::snr_in_db);
  r.snr_out_db = column(&SegmentMetrics::snr_out_db);
  r.snri_db = column(&SegmentMetrics::snri_db);
  r.prd_pct = column(&SegmentMetrics::prd_pct);
  r.pcc = column(&SegmentMetrics::pcc);
  r.mae = column(&SegmentMetrics::mae);
  r.segments = std::move(segments);
  return r;
}

std::vector<GroupReport> group_by_condition(const MetricReport& report) {
  std::map<std::pair<std::string, double>, std::vector<SegmentMetrics>> buckets;
  for (const auto& s : report.segments) buckets[{s.noise_mix, s.target_snr_db}].push_back(s);
  std::vector<GroupReport> out;
  for (auto& [key, segs] : buckets) out.push_back({key.first, key.second, aggregate(std::move(segs))});
  return out;
}

MetricReport evaluate(const Denoiser& denoise, const std::vector<data::SegmentPair>& pairs, std::size_t batch_size) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size == 0) batch_size = 1;
  std::vector<SegmentMetrics> segs;
  segs.reserve(pairs.size());
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    std::vector<std::vector<double>> noisy;
    for (std::size_t i = start; i < end; ++i) noisy.push_back(pairs[i].noisy);
    const auto out = denoise(noisy);
    if (out.size() != noisy.size()) throw std::runtime_error("evaluate: denoiser returned wrong batch size");
    for (std::size_t i = start; i < end; ++i) {
      const auto& p = pairs[i];
      auto m = segment_metrics(p.clean, p.noisy, out[i - start]);
      m.segment_id = p.segment_id;
      m.noise_mix = data::mix_name(p.noise_mix);
      m.target_snr_db = p.target_snr_db;
      segs.push_back(std::move(m));
    }
  }
  return aggregate(std::move(segs));
}

void write_segment_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "segment_id,noise_mix,target_snr,snr_in,snr_out,snri,prd,pcc,mae\n";
  os.precision(17);
  for (const auto& s : report.segments) {
    os << s.segment_id << ',' << s.noise_mix << ',' << s.target_snr_db << ',' << s.snr_in_db << ',' << s.snr_out_db
       << ',' << s.snri_db << ',' << s.prd_pct << ',' << s.pcc << ',' << s.mae << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string format_table(const std::vector<GroupReport>& groups, const MetricReport& overall) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %5s %16s %16s %16s %10s %10s\n", "noise", "snr_dB", "n", "MAE", "PCC",
                "SNRI_dB", "PRD_%", "SNRout_dB");
  os << line;
  auto row = [&](const std::string& mix, const std::string& snr, const MetricReport& r) {
    std::snprintf(line, sizeof line, "%-12s %8s %5zu %7.4f +- %-6.4f %7.4f +- %-6.4f %7.3f +- %-6.3f %10.3f %10.3f\n",
                  mix.c_str(), snr.c_str(), r.n_segments, r.mae.mean, r.mae.std, r.pcc.mean, r.pcc.std, r.snri_db.mean,
                  r.snri_db.std, r.prd_pct.mean, r.snr_out_db.mean);
    os << line;
  };
  for (const auto& g : groups) {
    char snr[32];
    std::snprintf(snr, sizeof snr, "%g", g.target_snr_db);
    row(g.noise_mix, snr, g.report);
  }
  row("all", "-", overall);
  const std::size_t excluded = overall.snr_out_db.excluded;
  if (excluded) os << excluded << " segment(s) with infinite output SNR excluded from SNR aggregates\n";
  return os.str();
}

}  // namespace tfunet::metrics
