#include "tfunet/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "tfunet/config.hpp"
#include "tfunet/data.hpp"

namespace tfunet::ckpt {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path with_suffix(const fs::path& prefix, const char* suffix) { return fs::path(prefix.string() + suffix); }

struct Entry {
  std::string name;
  std::string kind;
  Shape shape;
  std::span<double> values;
};

std::vector<Entry> entries(const TFTransUNet1D& model, optim::AdamW* opt) {
  std::vector<Entry> out;
  const auto params = model.parameters();
  for (auto p : params) out.push_back({p.name, "param", p.tensor.shape(), p.tensor.data()});
  for (auto b : model.buffers()) out.push_back({b.name, "buffer", b.tensor.shape(), b.tensor.data()});
  if (opt) {
    auto& m = opt->first_moments();
    auto& v = opt->second_moments();
    if (m.size() != params.size()) throw std::logic_error("optimizer does not match model parameters");
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({params[i].name, "adam_m", params[i].tensor.shape(), m[i]});
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({params[i].name, "adam_v", params[i].tensor.shape(), v[i]});
  }
  return out;
}

}  // namespace

bool exists(const fs::path& prefix) {
  return fs::exists(with_suffix(prefix, ".manifest.json")) && fs::exists(with_suffix(prefix, ".params.bin"));
}

void save(const fs::path& prefix, const TFTransUNet1D& model, const optim::AdamW* opt, const json& run_config,
          const TrainState& state) {
  const auto list = entries(model, const_cast<optim::AdamW*>(opt));
  json tensors = json::array();
  std::vector<double> payload;
  for (const auto& e : list) {
    tensors.push_back({{"name", e.name}, {"kind", e.kind}, {"shape", e.shape}, {"offset", payload.size()}});
    payload.insert(payload.end(), e.values.begin(), e.values.end());
  }
  json manifest{{"format", "tfunet-checkpoint-1"},
                {"model", model_config_json(model.config())},
                {"run_config", run_config},
                {"tensors", tensors},
                {"total_values", payload.size()},
                {"state",
                 {{"epoch", state.epoch},
                  {"best_epoch", state.best_epoch},
                  {"best_val", std::isfinite(state.best_val) ? json(state.best_val) : json(nullptr)},
                  {"since_improvement", state.since_improvement},
                  {"rng_state", state.rng_state},
                  {"adam_steps", opt ? opt->steps() : 0}}}};

  // Write both files under temporary names first so a crash never leaves a
  // half-written checkpoint under the final name.
  const auto bin = with_suffix(prefix, ".params.bin");
  const auto man = with_suffix(prefix, ".manifest.json");
  const auto bin_tmp = with_suffix(prefix, ".params.bin.tmp");
  const auto man_tmp = with_suffix(prefix, ".manifest.json.tmp");
  data::write_f64(bin_tmp, payload);
  {
    std::ofstream os(man_tmp);
    if (!os) throw std::runtime_error("cannot write " + man_tmp.string());
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("failed writing " + man_tmp.string());
  }
  fs::rename(bin_tmp, bin);
  fs::rename(man_tmp, man);
}

json read_manifest(const fs::path& prefix) {
  const auto man = with_suffix(prefix, ".manifest.json");
  std::ifstream is(man);
  if (!is) throw std::runtime_error("cannot open checkpoint manifest " + man.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest " + man.string() + ": " + e.what());
  }
  if (j.value("format", "") != "tfunet-checkpoint-1") throw std::runtime_error("unrecognized checkpoint format in " + man.string());
  return j;
}

ModelConfig model_config(const fs::path& prefix) { return model_config_from_json(read_manifest(prefix).at("model")); }

TrainState load(const fs::path& prefix, TFTransUNet1D& model, optim::AdamW* opt) {
  const json manifest = read_manifest(prefix);
  const auto payload = data::read_f64(with_suffix(prefix, ".params.bin"));
  if (payload.size() != manifest.at("total_values").get<std::size_t>())
    throw std::runtime_error("checkpoint payload size does not match manifest");

  std::map<std::pair<std::string, std::string>, const json*> by_key;
  for (const auto& t : manifest.at("tensors")) by_key[{t.at("kind").get<std::string>(), t.at("name").get<std::string>()}] = &t;

  for (auto& e : entries(model, opt)) {
    auto it = by_key.find({e.kind, e.name});
    if (it == by_key.end()) throw std::runtime_error("checkpoint lacks " + e.kind + " '" + e.name + "'");
    const auto shape = it->second->at("shape").get<Shape>();
    if (shape != e.shape)
      throw std::runtime_error("checkpoint shape " + shape_str(shape) + " for '" + e.name + "' does not match model " +
                               shape_str(e.shape));
    const auto offset = it->second->at("offset").get<std::size_t>();
    if (offset + e.values.size() > payload.size()) throw std::runtime_error("checkpoint payload truncated");
    std::copy(payload.begin() + static_cast<std::ptrdiff_t>(offset),
              payload.begin() + static_cast<std::ptrdiff_t>(offset + e.values.size()), e.values.begin());
  }

  const auto& s = manifest.at("state");
  TrainState st;
  st.epoch = s.at("epoch").get<int>();
  st.best_epoch = s.at("best_epoch").get<int>();
  st.best_val = s.at("best_val").is_null() ? std::numeric_limits<double>::infinity() : s.at("best_val").get<double>();
  st.since_improvement = s.at("since_improvement").get<int>();
  st.rng_state = s.at("rng_state").get<std::string>();
  if (opt) opt->set_steps(s.at("adam_steps").get<std::int64_t>());
  return st;
}

}  // namespace tfunet::ckpt
