#include "tfunet/data.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tfunet::data {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void center(std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (auto& v : x) v -= m;
}

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

void SignalRecord::validate() const {
  if (!(fs > 0.0)) throw std::invalid_argument("record '" + id + "': sample rate must be positive");
  if (samples.empty()) throw std::invalid_argument("record '" + id + "': no samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw std::invalid_argument("record '" + id + "': non-finite sample");
}

SignalRecord synth_ecg(double duration_s, double fs, double bpm, std::uint64_t seed, std::string id) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("synth_ecg: duration must be positive");
  if (!(fs > 0.0)) throw std::invalid_argument("synth_ecg: sample rate must be positive");
  if (!(bpm >= 30.0 && bpm <= 220.0)) throw std::invalid_argument("synth_ecg: bpm must be in [30, 220]");

  struct Bump {
    double offset_s;  // relative to R peak, scaled by sqrt(RR)
    double width_s;
    double amplitude;
  };
  // P, Q, R, S, T
  static constexpr Bump kBeat[] = {
      {-0.20, 0.025, 0.15}, {-0.035, 0.010, -0.12}, {0.0, 0.012, 1.0}, {0.035, 0.010, -0.22}, {0.28, 0.050, 0.30}};

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::uniform_real_distribution<double> amp_jitter(-0.05, 0.05);

  SignalRecord rec;
  rec.id = std::move(id);
  rec.fs = fs;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  rec.samples.assign(n, 0.0);

  const double rr = 60.0 / bpm;
  const double qt_scale = std::sqrt(rr);
  double t_r = std::uniform_real_distribution<double>(0.25, 0.25 + rr)(rng);
  // Beats partially outside the record still contribute their visible bumps.
  double t = t_r - rr;
  while (t < duration_s + rr) {
    const double a = 1.0 + amp_jitter(rng);
    for (const auto& b : kBeat) {
      const bool is_qrs = std::abs(b.offset_s) < 0.05;
      const double centre = t + b.offset_s * (is_qrs ? 1.0 : qt_scale);
      const double width = b.width_s * (is_qrs ? 1.0 : qt_scale);
      const auto lo = static_cast<std::int64_t>(std::floor((centre - 5.0 * width) * fs));
      const auto hi = static_cast<std::int64_t>(std::ceil((centre + 5.0 * width) * fs));
      for (std::int64_t i = std::max<std::int64_t>(lo, 0); i <= hi && i < static_cast<std::int64_t>(n); ++i) {
        const double dt = static_cast<double>(i) / fs - centre;
        rec.samples[static_cast<std::size_t>(i)] += a * b.amplitude * std::exp(-0.5 * dt * dt / (width * width));
      }
    }
    t += rr * (1.0 + jitter(rng));
  }
  return rec;
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::BW: return "BW";
    case NoiseKind::EM: return "EM";
    case NoiseKind::MA: return "MA";
    case NoiseKind::PLI: return "PLI";
  }
  return "?";
}

NoiseKind parse_noise_kind(std::string_view s) {
  const auto l = lower(s);
  if (l == "bw") return NoiseKind::BW;
  if (l == "em") return NoiseKind::EM;
  if (l == "ma") return NoiseKind::MA;
  if (l == "pli") return NoiseKind::PLI;
  throw std::invalid_argument("unknown noise kind '" + std::string(s) + "' (expected bw, em, ma, pli)");
}

NoiseMix make_mix(std::vector<NoiseKind> kinds) {
  std::sort(kinds.begin(), kinds.end());
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
  if (kinds.empty()) throw std::invalid_argument("noise mix must contain at least one kind");
  return kinds;
}

NoiseMix parse_mix(std::string_view s) {
  std::vector<NoiseKind> kinds;
  std::string token;
  for (char c : std::string(s) + ",") {
    if (c == ',' || c == '+') {
      if (!token.empty()) kinds.push_back(parse_noise_kind(token));
      token.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      token += c;
    }
  }
  return make_mix(std::move(kinds));
}

std::string mix_name(const NoiseMix& mix) {
  std::string out;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    if (i) out += '+';
    out += to_string(mix[i]);
  }
  return out;
}

std::vector<double> generate_noise(const NoiseSpec& spec, std::size_t n, double fs) {
  if (n == 0) throw std::invalid_argument("generate_noise: length must be >= 1");
  if (!(fs > 0.0)) throw std::invalid_argument("generate_noise: sample rate must be positive");
  std::mt19937_64 rng(splitmix64(spec.seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n, 0.0);

  switch (spec.kind) {
    case NoiseKind::BW: {
      for (int c = 0; c < 3; ++c) {
        const double f = 0.05 + 0.45 * unit(rng);
        const double phase = kTwoPi * unit(rng);
        const double amp = 0.5 + 0.5 * unit(rng);
        for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(kTwoPi * f * static_cast<double>(i) / fs + phase);
      }
      break;
    }
    case NoiseKind::PLI: {
      const double phase = kTwoPi * unit(rng);
      const double am_f = 0.1 + 0.9 * unit(rng);
      const double am_phase = kTwoPi * unit(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        x[i] = (1.0 + 0.1 * std::sin(kTwoPi * am_f * t + am_phase)) * std::sin(kTwoPi * spec.mains_hz * t + phase);
      }
      break;
    }
    case NoiseKind::MA: {
      // First difference (high-pass) then a 2-tap average (suppresses Nyquist);
      // the cascade has gain |sin(2 pi f / fs)|, concentrating energy well above 20 Hz.
      std::vector<double> w(n + 2);
      for (auto& v : w) v = gauss(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double d1 = w[i + 1] - w[i];
        const double d2 = w[i + 2] - w[i + 1];
        x[i] = 0.5 * (d1 + d2);
      }
      break;
    }
    case NoiseKind::EM: {
      std::exponential_distribution<double> gap(spec.em_rate_hz);
      const double duration = static_cast<double>(n) / fs;
      for (double t0 = gap(rng); t0 < duration; t0 += gap(rng)) {
        const double amp = gauss(rng);
        const double tau = 0.1 + 0.4 * unit(rng);
        const auto start = static_cast<std::size_t>(std::ceil(t0 * fs));
        for (std::size_t i = start; i < n; ++i) {
          const double decay = std::exp(-(static_cast<double>(i) / fs - t0) / tau);
          if (decay < 1e-6) break;
          x[i] += amp * decay;
        }
      }
      for (auto& v : x) v += spec.em_floor * gauss(rng);
      break;
    }
  }
  center(x);
  return x;
}

std::vector<double> generate_mix(const NoiseMix& mix, std::uint64_t seed, std::size_t n, double fs, double mains_hz) {
  std::vector<double> total(n, 0.0);
  for (auto kind : mix) {
    NoiseSpec spec;
    spec.kind = kind;
    spec.seed = splitmix64(seed ^ (0x51ed270b27a1f3ull * (static_cast<std::uint64_t>(kind) + 1)));
    spec.mains_hz = mains_hz;
    auto part = generate_noise(spec, n, fs);
    const double p = mean_square(part);
    const double s = p > 0.0 ? 1.0 / std::sqrt(p) : 0.0;
    for (std::size_t i = 0; i < n; ++i) total[i] += s * part[i];
  }
  center(total);
  return total;
}

double mean_square(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

MixResult mix_at_snr(std::span<const double> clean, std::span<const double> noise, double target_snr_db) {
  if (clean.size() != noise.size() || clean.empty())
    throw std::invalid_argument("mix_at_snr: clean and noise must have equal, non-zero length");
  const double pc = mean_square(clean);
  const double pn = mean_square(noise);
  if (!(pc > 0.0)) throw std::invalid_argument("mix_at_snr: clean signal has zero power");
  if (!(pn > 0.0)) throw std::invalid_argument("mix_at_snr: noise has zero power");
  MixResult r;
  r.scale = std::sqrt(pc / (pn * std::pow(10.0, target_snr_db / 10.0)));
  r.noisy.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) r.noisy[i] = clean[i] + r.scale * noise[i];
  return r;
}

std::vector<Window> segment_and_normalize(const SignalRecord& rec, std::size_t window, std::size_t stride) {
  if (window == 0) throw std::invalid_argument("segment: window must be >= 1");
  if (stride == 0) throw std::invalid_argument("segment: stride must be >= 1");
  if (rec.samples.size() < window)
    throw std::invalid_argument("record '" + rec.id + "' has " + std::to_string(rec.samples.size()) +
                                " samples, shorter than window " + std::to_string(window));
  std::vector<Window> out;
  for (std::size_t off = 0; off + window <= rec.samples.size(); off += stride) {
    Window w;
    w.offset = off;
    w.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(off),
                     rec.samples.begin() + static_cast<std::ptrdiff_t>(off + window));
    const double m = std::accumulate(w.samples.begin(), w.samples.end(), 0.0) / static_cast<double>(window);
    double v = 0.0;
    for (double s : w.samples) v += (s - m) * (s - m);
    const double sd = std::sqrt(v / static_cast<double>(window));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) {
      std::cerr << "warning: record '" << rec.id << "' window at offset " << off << " has zero variance; skipped\n";
      continue;
    }
    for (auto& s : w.samples) s = (s - m) / sd;
    // Second pass removes the residual mean left by rounding.
    const double m2 = std::accumulate(w.samples.begin(), w.samples.end(), 0.0) / static_cast<double>(window);
    for (auto& s : w.samples) s -= m2;
    w.mean = m;
    w.std = sd;
    out.push_back(std::move(w));
  }
  return out;
}

std::uint64_t segment_seed(std::uint64_t global_seed, std::string_view record_id, std::size_t offset, double snr_db,
                           const NoiseMix& mix) {
  std::ostringstream os;
  os << global_seed << '|' << record_id << '|' << offset << '|' << std::setprecision(17) << snr_db << '|'
     << mix_name(mix);
  return splitmix64(fnv1a(os.str()));
}

void SplitAssignment::validate() const {
  std::set<std::string> seen;
  for (const auto* part : {&train, &val, &test})
    for (const auto& id : *part)
      if (!seen.insert(id).second) throw std::invalid_argument("record id '" + id + "' appears in more than one split");
}

SplitAssignment split_records(std::vector<std::string> ids, double val_fraction, double test_fraction,
                              std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::mt19937_64 rng(splitmix64(seed));
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = ids.size();
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (test_fraction > 0.0 && n_test == 0 && n >= 3) n_test = 1;
  if (val_fraction > 0.0 && n_val == 0 && n >= 3) n_val = 1;
  if (n_test + n_val >= n) throw std::invalid_argument("split leaves no training records");
  SplitAssignment s;
  s.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test),
               ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), ids.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<SegmentPair> synthesize_pairs(const std::vector<SignalRecord>& records, const DatasetPlan& plan) {
  if (plan.mixes.empty() || plan.snrs_db.empty()) throw std::invalid_argument("dataset plan needs mixes and SNRs");
  struct Task {
    const SignalRecord* rec;
    const Window* win;
    const NoiseMix* mix;
    double snr;
  };
  std::vector<std::vector<Window>> windows;
  windows.reserve(records.size());
  for (const auto& rec : records) {
    rec.validate();
    windows.push_back(segment_and_normalize(rec, plan.window, plan.stride));
  }
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < records.size(); ++r)
    for (const auto& w : windows[r])
      for (const auto& mix : plan.mixes)
        for (double snr : plan.snrs_db) tasks.push_back({&records[r], &w, &mix, snr});

  std::vector<SegmentPair> pairs(tasks.size());
  std::vector<std::string> errors(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(tasks.size()); ++i) {
    const auto& t = tasks[static_cast<std::size_t>(i)];
    auto& p = pairs[static_cast<std::size_t>(i)];
    try {
      p.record_id = t.rec->id;
      p.offset = t.win->offset;
      p.noise_mix = *t.mix;
      p.target_snr_db = t.snr;
      p.seed = segment_seed(plan.seed, t.rec->id, t.win->offset, t.snr, *t.mix);
      p.clean = t.win->samples;
      p.clean_mean = t.win->mean;
      p.clean_std = t.win->std;
      const auto noise = generate_mix(*t.mix, p.seed, p.clean.size(), t.rec->fs, plan.mains_hz);
      auto mixed = mix_at_snr(p.clean, noise, t.snr);
      p.noisy = std::move(mixed.noisy);
      p.scale = mixed.scale;
      std::ostringstream id;
      id << p.record_id << '@' << p.offset << '/' << mix_name(p.noise_mix) << '/' << p.target_snr_db << "dB";
      p.segment_id = id.str();
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);
  return pairs;
}

namespace {

json manifest_entry(const SegmentPair& p, const std::string& file) {
  json kinds = json::array();
  for (auto k : p.noise_mix) kinds.push_back(to_string(k));
  return json{{"segment_id", p.segment_id}, {"file", file},          {"record_id", p.record_id},
              {"offset", p.offset},         {"noise_mix", kinds},    {"target_snr_db", p.target_snr_db},
              {"seed", p.seed},             {"scale", p.scale},      {"clean_mean", p.clean_mean},
              {"clean_std", p.clean_std},   {"length", p.clean.size()}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

DatasetSummary build_dataset(const std::vector<SignalRecord>& records, const DatasetPlan& plan,
                             const SplitAssignment& split, const fs::path& out_dir) {
  split.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetSummary summary;
  json splits_json;
  const std::pair<const char*, const std::vector<std::string>*> parts[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, ids] : parts) {
    std::vector<SignalRecord> subset;
    for (const auto& id : *ids) {
      auto it = std::find_if(records.begin(), records.end(), [&](const SignalRecord& r) { return r.id == id; });
      if (it == records.end()) throw std::invalid_argument("split references unknown record '" + id + "'");
      subset.push_back(*it);
    }
    const fs::path dir = out_dir / name;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    const auto pairs = subset.empty() ? std::vector<SegmentPair>{} : synthesize_pairs(subset, plan);
    json entries = json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::ostringstream fname;
      fname << std::setw(6) << std::setfill('0') << i << ".f64";
      std::vector<double> both(pairs[i].clean);
      both.insert(both.end(), pairs[i].noisy.begin(), pairs[i].noisy.end());
      write_f64(dir / fname.str(), both);
      entries.push_back(manifest_entry(pairs[i], fname.str()));
    }
    write_json(dir / "manifest.json", json{{"split", name}, {"records", *ids}, {"pairs", entries}});
    splits_json[name] = *ids;
    if (std::string_view(name) == "train") summary.train = pairs.size();
    if (std::string_view(name) == "val") summary.val = pairs.size();
    if (std::string_view(name) == "test") summary.test = pairs.size();
  }

  json mixes = json::array();
  for (const auto& m : plan.mixes) mixes.push_back(mix_name(m));
  write_json(out_dir / "dataset.json", json{{"splits", splits_json},
                                            {"mixes", mixes},
                                            {"snrs_db", plan.snrs_db},
                                            {"window", plan.window},
                                            {"stride", plan.stride},
                                            {"seed", plan.seed},
                                            {"mains_hz", plan.mains_hz},
                                            {"counts", {{"train", summary.train}, {"val", summary.val}, {"test", summary.test}}}});
  return summary;
}

std::vector<SegmentPair> load_split(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  json m;
  try {
    is >> m;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest in " + dir.string() + ": " + e.what());
  }
  std::vector<SegmentPair> out;
  for (const auto& e : m.at("pairs")) {
    SegmentPair p;
    p.segment_id = e.at("segment_id").get<std::string>();
    p.record_id = e.at("record_id").get<std::string>();
    p.offset = e.at("offset").get<std::size_t>();
    std::vector<NoiseKind> kinds;
    for (const auto& k : e.at("noise_mix")) kinds.push_back(parse_noise_kind(k.get<std::string>()));
    p.noise_mix = make_mix(std::move(kinds));
    p.target_snr_db = e.at("target_snr_db").get<double>();
    p.seed = e.at("seed").get<std::uint64_t>();
    p.scale = e.at("scale").get<double>();
    p.clean_mean = e.at("clean_mean").get<double>();
    p.clean_std = e.at("clean_std").get<double>();
    const auto len = e.at("length").get<std::size_t>();
    auto both = read_f64(dir / e.at("file").get<std::string>());
    if (both.size() != 2 * len) throw std::runtime_error("pair file size mismatch for " + p.segment_id);
    p.clean.assign(both.begin(), both.begin() + static_cast<std::ptrdiff_t>(len));
    p.noisy.assign(both.begin() + static_cast<std::ptrdiff_t>(len), both.end());
    out.push_back(std::move(p));
  }
  return out;
}

bool is_raw_path(const fs::path& path) {
  const auto ext = lower(path.extension().string());
  return ext == ".f64" || ext == ".bin" || ext == ".raw";
}

std::vector<double> read_f64(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 8 bytes");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u;
    std::memcpy(&u, bytes.data() + 8 * i, 8);
    u = to_le(u);
    out[i] = std::bit_cast<double>(u);
  }
  return out;
}

void write_f64(const fs::path& path, std::span<const double> values) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (double v : values) {
    const std::uint64_t u = to_le(std::bit_cast<std::uint64_t>(v));
    os.write(reinterpret_cast<const char*>(&u), 8);
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

SignalRecord load_record(const fs::path& path) {
  SignalRecord rec;
  rec.id = path.stem().string();
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar) && sidecar != path) {
    std::ifstream is(sidecar);
    json j;
    is >> j;
    if (j.contains("id")) rec.id = j.at("id").get<std::string>();
    if (j.contains("fs")) rec.fs = j.at("fs").get<double>();
  }
  if (is_raw_path(path)) {
    rec.samples = read_f64(path);
  } else {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      try {
        std::size_t used = 0;
        rec.samples.push_back(std::stod(line.substr(first), &used));
      } catch (const std::exception&) {
        throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": not a number");
      }
    }
  }
  rec.validate();
  return rec;
}

void save_record(const SignalRecord& rec, const fs::path& path) {
  if (is_raw_path(path)) {
    write_f64(path, rec.samples);
  } else {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << std::setprecision(17);
    for (double v : rec.samples) os << v << '\n';
    if (!os) throw std::runtime_error("failed writing " + path.string());
  }
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  write_json(sidecar, json{{"id", rec.id}, {"fs", rec.fs}});
}

}  // namespace tfunet::data
