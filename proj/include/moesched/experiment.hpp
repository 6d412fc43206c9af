#pragma once

// Runs every requested strategy of a config over all layers and emits the
// result table as CSV and a JSON summary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "moesched/baselines.hpp"
#include "moesched/config.hpp"
#include "moesched/placement.hpp"
#include "moesched/sim.hpp"

namespace moesched {

inline constexpr const char* kCsvColumns[] = {"scenario",
                                              "strategy",
                                              "layer",
                                              "n",
                                              "noise_level",
                                              "seed",
                                              "comm_makespan_first",
                                              "comm_makespan_second",
                                              "inference_time",
                                              "utilization",
                                              "oracle_time",
                                              "oracle_ratio"};

struct ResultRow {
  std::string scenario;
  std::string strategy;
  std::size_t layer = 0;
  std::size_t n = 0;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  double comm_first = 0.0;
  double comm_second = 0.0;
  double inference_time = 0.0;
  double utilization = 0.0;
  std::optional<double> oracle_time;
  std::optional<double> oracle_ratio;
  std::vector<ComponentTimeline> timeline;
};

struct ErrorRecord {
  std::string scenario;
  std::string strategy;
  std::optional<std::size_t> layer;
  std::string message;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<ErrorRecord> errors;

  bool ok() const { return errors.empty(); }
};

/// Per-layer seed for the randomized baselines.
inline std::uint64_t layer_seed(std::uint64_t seed, std::size_t layer) {
  return seed * 0x100000001B3ULL + static_cast<std::uint64_t>(layer);
}

/// Traffic a layer is evaluated on: the base layer mixed with the layers
/// following it (cyclically), as many as the noise level asks for.
inline LayerProfile evaluation_layer(const ModelProfile& model, std::size_t layer, double noise_level) {
  const std::size_t count = model.layers.size();
  std::vector<LayerProfile> others;
  for (std::size_t k = 1; k < count; ++k) others.push_back(model.layers[(layer + k) % count]);
  return inject_noise(model.layers[layer], others, noise_level);
}

namespace detail {

inline std::vector<std::string> sorted_strategies(std::vector<std::string> s) {
  std::sort(s.begin(), s.end());
  return s;
}

inline ResultRow row_from(const ExperimentConfig& c, const std::string& strategy, std::size_t layer, const TimelineResult& r) {
  ResultRow row;
  row.scenario = scenario_name(c.scenario);
  row.strategy = strategy;
  row.layer = layer;
  row.n = c.cluster.size();
  row.noise_level = c.noise_level;
  row.seed = c.seed;
  row.comm_first = r.comm_first;
  row.comm_second = r.comm_second;
  row.inference_time = r.inference_time;
  row.utilization = r.utilization;
  row.timeline = r.components;
  return row;
}

inline ResultRow run_exclusive(const ExperimentConfig& c, const std::string& strategy, std::size_t layer) {
  const ModelProfile& model = c.models[0].profile;
  const LayerProfile& base = model.layers[layer];
  const LayerProfile eval = evaluation_layer(model, layer, c.noise_level);
  const std::uint64_t seed = layer_seed(c.seed, layer);
  const std::size_t n = c.cluster.size();

  DeploymentPlan plan = c.scenario == Scenario::ExclusiveHomo ? DeploymentPlan::exclusive(identity_permutation(n))
                                                              : assign_exclusive_hetero(base.tokens_received(), c.cluster);
  Scheduler scheduler = build_schedule;
  if (strategy == "rga") plan = assign_rga(n, c.cluster, seed);
  if (strategy == "rcs") scheduler = [seed](const TrafficMatrix& d, const ClusterSpec& cl) { return schedule_rcs(d, cl, seed); };
  if (strategy == "sjf") scheduler = schedule_sjf;
  return row_from(c, strategy, layer, simulate_exclusive(eval, plan, c.cluster, scheduler));
}

inline ResultRow run_colocated(const ExperimentConfig& c, const std::string& strategy, std::size_t layer,
                               std::optional<double> oracle_time) {
  const LayerProfile& base_a = c.models[0].profile.layers[layer];
  const LayerProfile& base_b = c.models[1].profile.layers[layer];
  const LayerProfile eval_a = evaluation_layer(c.models[0].profile, layer, c.noise_level);
  const LayerProfile eval_b = evaluation_layer(c.models[1].profile, layer, c.noise_level);
  const std::uint64_t seed = layer_seed(c.seed, layer);
  const std::size_t n = c.cluster.size();
  const bool hetero = c.scenario == Scenario::ColocHetero;

  if (strategy == "same-model") {
    const SameModelRun s = simulate_same_model(eval_a, eval_b, c.cluster);
    ResultRow row = row_from(c, strategy, layer, s.a);
    row.comm_first = std::max(s.a.comm_first, s.b.comm_first);
    row.comm_second = std::max(s.a.comm_second, s.b.comm_second);
    row.inference_time = s.inference_time;
    row.utilization = s.utilization;
    for (auto& comp : row.timeline) comp.name += "_a";
    for (auto comp : s.b.components) {
      comp.name += "_b";
      row.timeline.push_back(std::move(comp));
    }
    return row;
  }

  DeploymentPlan plan;
  if (strategy == "aurora") {
    plan = hetero ? colocate_heterogeneous(base_a, base_b, c.cluster) : colocate_homogeneous(base_a, base_b);
  } else {
    const auto partner = strategy == "rec" ? colocate_rec(n, seed)
                                           : pair_experts(load_vector(base_a.dispatch), load_vector(base_b.dispatch)).partner;
    const auto gpus = hetero ? assign_rga(n, c.cluster, seed).assignment_a() : identity_permutation(n);
    plan = plan_from_pairing(partner, gpus);
  }
  ResultRow row = row_from(c, strategy, layer, simulate_colocated(eval_a, eval_b, plan, c.cluster));
  if (oracle_time) {
    row.oracle_time = oracle_time;
    row.oracle_ratio = row.inference_time / *oracle_time;
  }
  return row;
}

}  // namespace detail

inline bool row_less(const ResultRow& x, const ResultRow& y) {
  return std::tie(x.scenario, x.strategy, x.layer, x.noise_level, x.seed) <
         std::tie(y.scenario, y.strategy, y.layer, y.noise_level, y.seed);
}

/// Evaluates every (strategy, layer) cell. A failing cell becomes an error
/// record; the other cells still run.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  ExperimentResult out;
  const std::string scenario = scenario_name(c.scenario);
  const std::size_t layers = c.models.front().profile.layers.size();

  std::vector<std::optional<double>> oracle(layers);
  if (c.scenario == Scenario::ColocHetero && c.cluster.size() <= c.oracle_cap) {
    for (std::size_t l = 0; l < layers; ++l) {
      try {
        oracle[l] = brute_force_colocation_hetero(evaluation_layer(c.models[0].profile, l, c.noise_level),
                                                  evaluation_layer(c.models[1].profile, l, c.noise_level), c.cluster, c.oracle_cap)
                        .time;
      } catch (const std::exception& e) {
        out.errors.push_back({scenario, "oracle", l, e.what()});
      }
    }
  }

  for (const auto& strategy : detail::sorted_strategies(c.strategies)) {
    for (std::size_t l = 0; l < layers; ++l) {
      try {
        if (is_colocated(c.scenario)) {
          out.rows.push_back(detail::run_colocated(c, strategy, l, strategy == "same-model" ? std::nullopt : oracle[l]));
        } else {
          out.rows.push_back(detail::run_exclusive(c, strategy, l));
        }
      } catch (const std::exception& e) {
        out.errors.push_back({scenario, strategy, l, e.what()});
      }
    }
  }
  std::stable_sort(out.rows.begin(), out.rows.end(), row_less);
  return out;
}

/// Copy of `c` for repeat `r`: run seed and synthetic workload seeds shifted by r.
inline ExperimentConfig repeat_config(const ExperimentConfig& c, std::uint64_t r, double noise_level) {
  ExperimentConfig out = c;
  out.seed = c.seed + r;
  out.noise_level = noise_level;
  for (auto& m : out.models) {
    if (!m.synthetic) continue;
    m.synthetic->seed += r;
    m.profile = generate_workload(*m.synthetic, m.profile.model_id);
  }
  return out;
}

/// Runs the config at each noise level the layer count supports, `repeats`
/// times with consecutive seeds.
inline ExperimentResult run_sweep(const ExperimentConfig& c, std::uint64_t repeats) {
  ExperimentResult all;
  std::size_t layers = c.models.front().profile.layers.size();
  for (const auto& m : c.models) layers = std::min(layers, m.profile.layers.size());
  for (double level : {0.0, 0.25, 0.5, 0.75}) {
    if (static_cast<std::size_t>(level * 4) + 1 > layers) break;
    for (std::uint64_t r = 0; r < repeats; ++r) {
      auto part = run_experiment(repeat_config(c, r, level));
      all.rows.insert(all.rows.end(), part.rows.begin(), part.rows.end());
      all.errors.insert(all.errors.end(), part.errors.begin(), part.errors.end());
    }
  }
  std::stable_sort(all.rows.begin(), all.rows.end(), row_less);
  return all;
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string to_csv(const ExperimentResult& r) {
  std::string out;
  for (std::size_t k = 0; k < std::size(kCsvColumns); ++k) out += (k ? "," : "") + std::string(kCsvColumns[k]);
  out += "\n";
  for (const auto& row : r.rows) {
    out += row.scenario + "," + row.strategy + "," + std::to_string(row.layer) + "," + std::to_string(row.n) + "," +
           format_number(row.noise_level) + "," + std::to_string(row.seed) + "," + format_number(row.comm_first) + "," +
           format_number(row.comm_second) + "," + format_number(row.inference_time) + "," + format_number(row.utilization) + "," +
           (row.oracle_time ? format_number(*row.oracle_time) : "") + "," +
           (row.oracle_ratio ? format_number(*row.oracle_ratio) : "") + "\n";
  }
  return out;
}

inline Json to_json(const ComponentTimeline& c) {
  Json per_gpu = Json::array();
  for (const auto& iv : c.per_gpu) per_gpu.push_back(Json::array({iv.start, iv.end}));
  return Json{{"name", c.name}, {"kind", c.compute ? "compute" : "comm"}, {"start", c.start}, {"end", c.end}, {"per_gpu", per_gpu}};
}

/// Mirror of the CSV rows with per-component timelines, per-strategy
/// totals over layers, and the error records.
inline Json summary_json(const ExperimentResult& r) {
  Json rows = Json::array();
  std::map<std::tuple<std::string, double, std::uint64_t>, std::pair<double, double>> totals;
  for (const auto& row : r.rows) {
    Json timeline = Json::array();
    for (const auto& c : row.timeline) timeline.push_back(to_json(c));
    rows.push_back(Json{{"scenario", row.scenario},
                        {"strategy", row.strategy},
                        {"layer", row.layer},
                        {"n", row.n},
                        {"noise_level", row.noise_level},
                        {"seed", row.seed},
                        {"comm_makespan_first", row.comm_first},
                        {"comm_makespan_second", row.comm_second},
                        {"inference_time", row.inference_time},
                        {"utilization", row.utilization},
                        {"oracle_time", row.oracle_time ? Json(*row.oracle_time) : Json(nullptr)},
                        {"oracle_ratio", row.oracle_ratio ? Json(*row.oracle_ratio) : Json(nullptr)},
                        {"timeline", std::move(timeline)}});
    auto& t = totals[{row.strategy, row.noise_level, row.seed}];
    t.first += row.inference_time;
    t.second += row.utilization * row.inference_time;
  }
  Json tot = Json::array();
  for (const auto& [key, t] : totals) {
    tot.push_back(Json{{"strategy", std::get<0>(key)},
                       {"noise_level", std::get<1>(key)},
                       {"seed", std::get<2>(key)},
                       {"inference_time", t.first},
                       {"utilization", t.first > 0.0 ? t.second / t.first : 0.0}});
  }
  Json errors = Json::array();
  for (const auto& e : r.errors) {
    errors.push_back(Json{{"scenario", e.scenario},
                          {"strategy", e.strategy},
                          {"layer", e.layer ? Json(*e.layer) : Json(nullptr)},
                          {"message", e.message}});
  }
  return Json{{"rows", std::move(rows)}, {"totals", std::move(tot)}, {"errors", std::move(errors)}};
}

/// `results.csv` -> `results.json`.
inline std::string summary_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

/// Writes the CSV and its JSON summary.
inline void write_results(const ExperimentResult& r, const std::string& csv_path) {
  write_file(csv_path, to_csv(r));
  write_file(summary_path(csv_path), summary_json(r).dump(2) + "\n");
}

}  // namespace moesched
