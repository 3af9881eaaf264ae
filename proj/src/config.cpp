#include "tfunet/config.hpp"

#include <fstream>
#include <set>

#include "tfunet/data.hpp"

namespace tfunet {

using json = nlohmann::json;

namespace {

template <typename T>
void take(const json& obj, const char* key, T& field) {
  if (!obj.contains(key)) return;
  try {
    field = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
}

}  // namespace

json model_config_json(const ModelConfig& m) {
  return json{{"base_channels", m.base_channels}, {"transformer_layers", m.transformer_layers},
              {"heads", m.heads},                 {"d_ff_ratio", m.d_ff_ratio},
              {"input_len", m.input_len},         {"in_channels", m.in_channels},
              {"out_channels", m.out_channels},   {"seed", m.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  check_keys(j, "model",
             {"base_channels", "transformer_layers", "heads", "d_ff_ratio", "input_len", "in_channels", "out_channels",
              "seed"});
  ModelConfig m;
  take(j, "base_channels", m.base_channels);
  take(j, "transformer_layers", m.transformer_layers);
  take(j, "heads", m.heads);
  take(j, "d_ff_ratio", m.d_ff_ratio);
  take(j, "input_len", m.input_len);
  take(j, "in_channels", m.in_channels);
  take(j, "out_channels", m.out_channels);
  take(j, "seed", m.seed);
  return m;
}

void RunConfig::validate() const {
  try {
    model.validate();
    loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("AdamW betas must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("AdamW eps must be > 0");
  if (adam.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(schedule.eta_max > 0.0) || schedule.eta_min < 0.0 || schedule.eta_min > schedule.eta_max)
    throw ConfigError("schedule requires 0 <= eta_min <= eta_max, eta_max > 0");
  if (schedule.t_max < 1) throw ConfigError("schedule t_max must be >= 1");
  if (synth.window != model.input_len) throw ConfigError("synth.window must equal model.input_len");
  if (synth.stride == 0) throw ConfigError("synth.stride must be >= 1");
  if (synth.noise.empty()) throw ConfigError("at least one noise mix is required");
  if (synth.snr_db.empty()) throw ConfigError("at least one target SNR is required");
  if (!(synth.fs > 0.0)) throw ConfigError("synth.fs must be > 0");
  if (synth.inputs.empty() && synth.n_records == 0) throw ConfigError("synth.n_records must be >= 1");
  if (!(synth.bpm_min >= 30.0 && synth.bpm_max <= 220.0 && synth.bpm_min <= synth.bpm_max))
    throw ConfigError("synth bpm range must lie in [30, 220]");
  if (synth.val_fraction < 0.0 || synth.test_fraction < 0.0 || synth.val_fraction + synth.test_fraction >= 1.0)
    throw ConfigError("split fractions must be >= 0 and sum to < 1");
  if (overfit_steps == 0 || overfit_batch == 0 || !(overfit_lr > 0.0)) throw ConfigError("invalid overfit settings");
  for (const auto& n : synth.noise) {
    try {
      data::parse_mix(n);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

json to_json(const RunConfig& c) {
  return json{
      {"model", model_config_json(c.model)},
      {"loss", {{"beta", c.loss.beta}, {"w_time", c.loss.w_time}, {"w_spectral", c.loss.w_spectral}}},
      {"optimizer",
       {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}, {"weight_decay", c.adam.weight_decay}}},
      {"schedule", {{"eta_max", c.schedule.eta_max}, {"eta_min", c.schedule.eta_min}, {"t_max", c.schedule.t_max}}},
      {"synth",
       {{"n_records", c.synth.n_records},
        {"record_seconds", c.synth.record_seconds},
        {"fs", c.synth.fs},
        {"bpm_min", c.synth.bpm_min},
        {"bpm_max", c.synth.bpm_max},
        {"inputs", c.synth.inputs},
        {"noise", c.synth.noise},
        {"snr_db", c.synth.snr_db},
        {"window", c.synth.window},
        {"stride", c.synth.stride},
        {"mains_hz", c.synth.mains_hz},
        {"val_fraction", c.synth.val_fraction},
        {"test_fraction", c.synth.test_fraction}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"patience", c.patience},
      {"seed", c.seed},
      {"data_dir", c.data_dir},
      {"out_dir", c.out_dir},
      {"overfit", {{"steps", c.overfit_steps}, {"batch", c.overfit_batch}, {"lr", c.overfit_lr}}},
  };
}

RunConfig from_json(const json& j, RunConfig c) {
  check_keys(j, "",
             {"model", "loss", "optimizer", "schedule", "synth", "epochs", "batch_size", "patience", "seed", "data_dir",
              "out_dir", "overfit"});
  if (j.contains("model")) {
    json merged = model_config_json(c.model);
    check_keys(j.at("model"), "model",
               {"base_channels", "transformer_layers", "heads", "d_ff_ratio", "input_len", "in_channels",
                "out_channels", "seed"});
    merged.update(j.at("model"));
    c.model = model_config_from_json(merged);
  }
  if (j.contains("loss")) {
    const auto& s = j.at("loss");
    check_keys(s, "loss", {"beta", "w_time", "w_spectral"});
    take(s, "beta", c.loss.beta);
    take(s, "w_time", c.loss.w_time);
    take(s, "w_spectral", c.loss.w_spectral);
  }
  if (j.contains("optimizer")) {
    const auto& s = j.at("optimizer");
    check_keys(s, "optimizer", {"beta1", "beta2", "eps", "weight_decay"});
    take(s, "beta1", c.adam.beta1);
    take(s, "beta2", c.adam.beta2);
    take(s, "eps", c.adam.eps);
    take(s, "weight_decay", c.adam.weight_decay);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s, "schedule", {"eta_max", "eta_min", "t_max"});
    take(s, "eta_max", c.schedule.eta_max);
    take(s, "eta_min", c.schedule.eta_min);
    take(s, "t_max", c.schedule.t_max);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, "synth",
               {"n_records", "record_seconds", "fs", "bpm_min", "bpm_max", "inputs", "noise", "snr_db", "window",
                "stride", "mains_hz", "val_fraction", "test_fraction"});
    take(s, "n_records", c.synth.n_records);
    take(s, "record_seconds", c.synth.record_seconds);
    take(s, "fs", c.synth.fs);
    take(s, "bpm_min", c.synth.bpm_min);
    take(s, "bpm_max", c.synth.bpm_max);
    take(s, "inputs", c.synth.inputs);
    take(s, "noise", c.synth.noise);
    take(s, "snr_db", c.synth.snr_db);
    take(s, "window", c.synth.window);
    take(s, "stride", c.synth.stride);
    take(s, "mains_hz", c.synth.mains_hz);
    take(s, "val_fraction", c.synth.val_fraction);
    take(s, "test_fraction", c.synth.test_fraction);
  }
  take(j, "epochs", c.epochs);
  take(j, "batch_size", c.batch_size);
  take(j, "patience", c.patience);
  take(j, "seed", c.seed);
  take(j, "data_dir", c.data_dir);
  take(j, "out_dir", c.out_dir);
  if (j.contains("overfit")) {
    const auto& s = j.at("overfit");
    check_keys(s, "overfit", {"steps", "batch", "lr"});
    take(s, "steps", c.overfit_steps);
    take(s, "batch", c.overfit_batch);
    take(s, "lr", c.overfit_lr);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json(cfg).dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace tfunet
