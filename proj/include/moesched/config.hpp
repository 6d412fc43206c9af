#pragma once

// Experiment configuration: JSON schema, validation with field paths, and
// canonical serialization.
//
// {
//   "scenario": "exclusive-homo" | "exclusive-hetero" | "coloc-homo" | "coloc-hetero",
//   "cluster": {"gpus": [{"bandwidth": 100, "compute_scale": 1}, ...]},
//   "models": [
//     {"model_id": "a", "layers": [{"gate_work": 2, "agg_work": 1, "ffn_work_per_token": 0.01,
//                                   "ffn_base_work": 1, "traffic": [[0, 5], [3, 0]]}]},
//     {"model_id": "b", "synthetic": {"n": 2, "skew": 1, "total_tokens": 8000, "layer_count": 4, "seed": 7}}
//   ],
//   "strategies": ["aurora", "rcs"],      // default: every strategy valid for the scenario
//   "noise_level": 0,                     // 0, 0.25, 0.5 or 0.75
//   "seed": 0,
//   "output": "results.csv",
//   "oracle_cap": 6
// }

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "moesched/core.hpp"
#include "moesched/placement.hpp"
#include "moesched/workload.hpp"

namespace moesched {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario { ExclusiveHomo, ExclusiveHetero, ColocHomo, ColocHetero };

inline constexpr const char* kScenarioNames[] = {"exclusive-homo", "exclusive-hetero", "coloc-homo", "coloc-hetero"};
inline constexpr const char* kStrategyNames[] = {"aurora", "rcs", "sjf", "rec", "rga", "same-model"};

inline std::string scenario_name(Scenario s) { return kScenarioNames[static_cast<int>(s)]; }

inline std::optional<Scenario> parse_scenario(const std::string& name) {
  for (int k = 0; k < 4; ++k)
    if (name == kScenarioNames[k]) return static_cast<Scenario>(k);
  return std::nullopt;
}

inline bool is_colocated(Scenario s) { return s == Scenario::ColocHomo || s == Scenario::ColocHetero; }

/// Strategies that make sense in a scenario, in canonical order.
inline std::vector<std::string> strategies_for(Scenario s) {
  switch (s) {
    case Scenario::ExclusiveHomo: return {"aurora", "rcs", "sjf"};
    case Scenario::ExclusiveHetero: return {"aurora", "rcs", "sjf", "rga"};
    case Scenario::ColocHomo: return {"aurora", "rec", "same-model"};
    case Scenario::ColocHetero: return {"aurora", "rec", "rga", "same-model"};
  }
  return {};
}

struct ModelSource {
  std::optional<SyntheticWorkloadSpec> synthetic;  ///< set when the layers were generated
  ModelProfile profile;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::ExclusiveHomo;
  ClusterSpec cluster;
  std::vector<ModelSource> models;
  std::vector<std::string> strategies;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::string output = "results.csv";
  std::size_t oracle_cap = kDefaultOracleCap;
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError(path + (path.empty() ? "" : ".") + key + ": unknown field");
  }
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(join(path, key) + ": missing required field");
  return obj.at(key);
}

inline double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

inline std::uint64_t as_count(const Json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError(path + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline double number_or(const Json& obj, const char* key, const std::string& path, double fallback) {
  return obj.contains(key) ? as_number(obj.at(key), join(path, key)) : fallback;
}

inline std::uint64_t count_or(const Json& obj, const char* key, const std::string& path, std::uint64_t fallback) {
  return obj.contains(key) ? as_count(obj.at(key), join(path, key)) : fallback;
}

inline void expect_object(const Json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
}

inline void expect_array(const Json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array");
}

inline TrafficMatrix parse_traffic(const Json& v, const std::string& path) {
  expect_array(v, path);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < v.size(); ++i) {
    expect_array(v[i], path + "[" + std::to_string(i) + "]");
    std::vector<double> row;
    for (std::size_t j = 0; j < v[i].size(); ++j)
      row.push_back(as_number(v[i][j], path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
    rows.push_back(std::move(row));
  }
  const auto report = validate_traffic_matrix(rows);
  if (!report.ok()) {
    const auto& first = report.violations.front();
    if (first.what == "empty matrix") throw ConfigError(path + ": empty matrix");
    if (first.what == "ragged row")
      throw ConfigError(path + "[" + std::to_string(first.row) + "]: row has " + std::to_string(first.col) + " entries, expected " +
                        std::to_string(rows.size()));
    throw ConfigError(path + "[" + std::to_string(first.row) + "][" + std::to_string(first.col) + "]: " + first.what);
  }
  return TrafficMatrix::from_rows(rows);
}

inline LayerProfile parse_layer(const Json& v, const std::string& path) {
  expect_object(v, path);
  reject_unknown(v, path, {"gate_work", "agg_work", "ffn_work_per_token", "ffn_base_work", "traffic"});
  double work[4];
  const char* keys[] = {"gate_work", "agg_work", "ffn_work_per_token", "ffn_base_work"};
  for (int k = 0; k < 4; ++k) {
    work[k] = as_number(require(v, keys[k], path), join(path, keys[k]));
    if (!(work[k] >= 0.0)) throw ConfigError(join(path, keys[k]) + ": must be >= 0");
  }
  return LayerProfile(work[0], work[1], work[2], work[3], parse_traffic(require(v, "traffic", path), join(path, "traffic")));
}

inline SyntheticWorkloadSpec parse_synthetic(const Json& v, const std::string& path) {
  expect_object(v, path);
  reject_unknown(v, path, {"n", "skew", "total_tokens", "layer_count", "seed", "gate_work", "agg_work", "ffn_work_per_token",
                           "ffn_base_work"});
  SyntheticWorkloadSpec s;
  s.n = as_count(require(v, "n", path), join(path, "n"));
  s.skew = number_or(v, "skew", path, s.skew);
  s.total_tokens = number_or(v, "total_tokens", path, s.total_tokens);
  s.layer_count = count_or(v, "layer_count", path, s.layer_count);
  s.seed = count_or(v, "seed", path, s.seed);
  s.gate_work = number_or(v, "gate_work", path, s.gate_work);
  s.agg_work = number_or(v, "agg_work", path, s.agg_work);
  s.ffn_work_per_token = number_or(v, "ffn_work_per_token", path, s.ffn_work_per_token);
  s.ffn_base_work = number_or(v, "ffn_base_work", path, s.ffn_base_work);
  if (s.n < 1) throw ConfigError(join(path, "n") + ": must be >= 1");
  if (s.skew < 0.0) throw ConfigError(join(path, "skew") + ": must be >= 0");
  if (s.total_tokens < 0.0) throw ConfigError(join(path, "total_tokens") + ": must be >= 0");
  if (s.layer_count < 1) throw ConfigError(join(path, "layer_count") + ": must be >= 1");
  for (const char* k : {"gate_work", "agg_work", "ffn_work_per_token", "ffn_base_work"})
    if (v.contains(k) && !(v.at(k).get<double>() >= 0.0)) throw ConfigError(join(path, k) + ": must be >= 0");
  return s;
}

inline ModelSource parse_model(const Json& v, const std::string& path, std::size_t index) {
  expect_object(v, path);
  reject_unknown(v, path, {"model_id", "layers", "synthetic"});
  std::string id = "model" + std::to_string(index);
  if (v.contains("model_id")) {
    if (!v.at("model_id").is_string()) throw ConfigError(join(path, "model_id") + ": expected a string");
    id = v.at("model_id").get<std::string>();
  }
  const bool has_layers = v.contains("layers");
  if (has_layers == v.contains("synthetic")) throw ConfigError(path + ": give exactly one of 'layers' or 'synthetic'");
  if (!has_layers) {
    const auto spec = parse_synthetic(v.at("synthetic"), join(path, "synthetic"));
    return {spec, generate_workload(spec, id)};
  }
  const Json& layers = v.at("layers");
  expect_array(layers, join(path, "layers"));
  if (layers.empty()) throw ConfigError(join(path, "layers") + ": at least one layer required");
  std::vector<LayerProfile> parsed;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = join(path, "layers") + "[" + std::to_string(l) + "]";
    parsed.push_back(parse_layer(layers[l], lp));
    if (parsed.back().experts() != parsed.front().experts())
      throw ConfigError(lp + ".traffic: " + std::to_string(parsed.back().experts()) + " experts, layer 0 has " +
                        std::to_string(parsed.front().experts()));
  }
  return {std::nullopt, ModelProfile(id, std::move(parsed))};
}

inline std::size_t noise_extra_layers(double level) {
  const double levels[] = {0.0, 0.25, 0.5, 0.75};
  for (std::size_t k = 0; k < 4; ++k)
    if (level == levels[k]) return k;
  throw ConfigError("noise_level: must be one of 0, 0.25, 0.5, 0.75");
}

}  // namespace detail

/// Validates and builds a config from parsed JSON. Errors name the field.
inline ExperimentConfig config_from_json(const Json& root) {
  using namespace detail;
  expect_object(root, "");
  reject_unknown(root, "", {"scenario", "cluster", "models", "strategies", "noise_level", "seed", "output", "oracle_cap"});
  ExperimentConfig c;

  const Json& sc = require(root, "scenario", "");
  if (!sc.is_string()) throw ConfigError("scenario: expected a string");
  const auto scenario = parse_scenario(sc.get<std::string>());
  if (!scenario)
    throw ConfigError("scenario: unknown value '" + sc.get<std::string>() +
                      "' (expected exclusive-homo, exclusive-hetero, coloc-homo or coloc-hetero)");
  c.scenario = *scenario;

  const Json& cl = require(root, "cluster", "");
  expect_object(cl, "cluster");
  reject_unknown(cl, "cluster", {"gpus"});
  const Json& gpus = require(cl, "gpus", "cluster");
  expect_array(gpus, "cluster.gpus");
  if (gpus.empty()) throw ConfigError("cluster.gpus: at least one GPU required");
  std::vector<GpuSpec> specs;
  for (std::size_t k = 0; k < gpus.size(); ++k) {
    const std::string gp = "cluster.gpus[" + std::to_string(k) + "]";
    expect_object(gpus[k], gp);
    reject_unknown(gpus[k], gp, {"bandwidth", "compute_scale"});
    specs.push_back({as_number(require(gpus[k], "bandwidth", gp), gp + ".bandwidth"),
                     number_or(gpus[k], "compute_scale", gp, 1.0)});
    if (!(specs.back().bandwidth > 0.0) || !std::isfinite(specs.back().bandwidth))
      throw ConfigError(gp + ".bandwidth: must be finite and > 0");
    if (!(specs.back().compute_scale > 0.0) || !std::isfinite(specs.back().compute_scale))
      throw ConfigError(gp + ".compute_scale: must be finite and > 0");
  }
  try {
    c.cluster = ClusterSpec(std::move(specs));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const Json& models = require(root, "models", "");
  expect_array(models, "models");
  const std::size_t want = is_colocated(c.scenario) ? 2 : 1;
  if (models.size() != want)
    throw ConfigError("models: scenario " + scenario_name(c.scenario) + " requires exactly " + std::to_string(want) +
                      (want == 1 ? " model" : " models") + ", got " + std::to_string(models.size()));
  for (std::size_t k = 0; k < models.size(); ++k) {
    const std::string mp = "models[" + std::to_string(k) + "]";
    try {
      c.models.push_back(parse_model(models[k], mp, k));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(mp + ": " + e.what());
    }
    if (c.models.back().profile.experts() != c.cluster.size())
      throw ConfigError(mp + ": " + std::to_string(c.models.back().profile.experts()) + " experts but cluster.gpus has " +
                        std::to_string(c.cluster.size()) + " GPUs");
  }
  if (want == 2 && c.models[0].profile.layers.size() != c.models[1].profile.layers.size())
    throw ConfigError("models[1]: layer count differs from models[0]");

  const auto allowed = strategies_for(c.scenario);
  if (root.contains("strategies")) {
    const Json& st = root.at("strategies");
    expect_array(st, "strategies");
    if (st.empty()) throw ConfigError("strategies: at least one strategy required");
    for (std::size_t k = 0; k < st.size(); ++k) {
      const std::string sp = "strategies[" + std::to_string(k) + "]";
      if (!st[k].is_string()) throw ConfigError(sp + ": expected a string");
      const std::string name = st[k].get<std::string>();
      if (std::find(std::begin(kStrategyNames), std::end(kStrategyNames), name) == std::end(kStrategyNames))
        throw ConfigError(sp + ": unknown strategy '" + name + "'");
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
        throw ConfigError(sp + ": strategy '" + name + "' does not apply to scenario " + scenario_name(c.scenario));
      if (std::find(c.strategies.begin(), c.strategies.end(), name) != c.strategies.end())
        throw ConfigError(sp + ": duplicate strategy '" + name + "'");
      c.strategies.push_back(name);
    }
  } else {
    c.strategies = allowed;
  }
  if (std::find(c.strategies.begin(), c.strategies.end(), "same-model") != c.strategies.end() && c.cluster.size() % 2 != 0)
    throw ConfigError("strategies: same-model requires an even GPU count, cluster.gpus has " + std::to_string(c.cluster.size()));

  c.noise_level = number_or(root, "noise_level", "", 0.0);
  const std::size_t extra = noise_extra_layers(c.noise_level);
  for (std::size_t k = 0; k < c.models.size(); ++k) {
    if (c.models[k].profile.layers.size() < extra + 1)
      throw ConfigError("noise_level: " + std::to_string(c.noise_level) + " needs at least " + std::to_string(extra + 1) +
                        " layers in models[" + std::to_string(k) + "]");
  }
  c.seed = count_or(root, "seed", "", 0);
  if (root.contains("output")) {
    if (!root.at("output").is_string()) throw ConfigError("output: expected a string");
    c.output = root.at("output").get<std::string>();
  }
  c.oracle_cap = count_or(root, "oracle_cap", "", kDefaultOracleCap);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  return config_from_json(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline Json to_json(const SyntheticWorkloadSpec& s) {
  return Json{{"n", s.n},
              {"skew", s.skew},
              {"total_tokens", s.total_tokens},
              {"layer_count", s.layer_count},
              {"seed", s.seed},
              {"gate_work", s.gate_work},
              {"agg_work", s.agg_work},
              {"ffn_work_per_token", s.ffn_work_per_token},
              {"ffn_base_work", s.ffn_base_work}};
}

inline Json to_json(const LayerProfile& l) {
  return Json{{"gate_work", l.gate_work},
              {"agg_work", l.agg_work},
              {"ffn_work_per_token", l.ffn_work_per_token},
              {"ffn_base_work", l.ffn_base_work},
              {"traffic", l.dispatch.to_rows()}};
}

/// Canonical form: every field present, fixed key order.
inline Json to_json(const ExperimentConfig& c) {
  Json gpus = Json::array();
  for (const auto& g : c.cluster.gpus()) gpus.push_back(Json{{"bandwidth", g.bandwidth}, {"compute_scale", g.compute_scale}});
  Json models = Json::array();
  for (const auto& m : c.models) {
    Json jm{{"model_id", m.profile.model_id}};
    if (m.synthetic) {
      jm["synthetic"] = to_json(*m.synthetic);
    } else {
      Json layers = Json::array();
      for (const auto& l : m.profile.layers) layers.push_back(to_json(l));
      jm["layers"] = std::move(layers);
    }
    models.push_back(std::move(jm));
  }
  return Json{{"scenario", scenario_name(c.scenario)},
              {"cluster", Json{{"gpus", std::move(gpus)}}},
              {"models", std::move(models)},
              {"strategies", c.strategies},
              {"noise_level", c.noise_level},
              {"seed", c.seed},
              {"output", c.output},
              {"oracle_cap", c.oracle_cap}};
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace moesched
