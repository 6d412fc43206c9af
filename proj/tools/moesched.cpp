// Command-line front end: schedule, place, simulate, experiment, oracle.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moesched/baselines.hpp"
#include "moesched/config.hpp"
#include "moesched/experiment.hpp"

namespace {

using namespace moesched;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scenario;
  std::optional<std::string> strategies;
  std::optional<double> noise;
};

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": parse error: " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

ExperimentConfig load_with_overrides(const Overrides& o) {
  Json root = read_json(o.config);
  if (root.is_object()) {
    if (o.seed) root["seed"] = *o.seed;
    if (o.scenario) root["scenario"] = *o.scenario;
    if (o.strategies) root["strategies"] = split_list(*o.strategies);
    if (o.noise) root["noise_level"] = *o.noise;
  }
  return config_from_json(root);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

Json schedule_json(const CommSchedule& s, double b_max) {
  Json phases = Json::array();
  for (const auto& p : s.phases) {
    Json transfers = Json::array();
    for (const auto& t : p.transfers) transfers.push_back(Json{{"src", t.src}, {"dst", t.dst}, {"duration", t.duration}});
    phases.push_back(Json{{"duration", p.duration}, {"transfers", std::move(transfers)}});
  }
  return Json{{"gpus", s.gpus}, {"makespan", s.makespan}, {"b_max", b_max}, {"phases", std::move(phases)}};
}

Json plan_json(const DeploymentPlan& p) {
  Json j{{"assignment_a", p.assignment_a()}};
  if (p.is_colocated()) {
    j["assignment_b"] = p.assignment_b();
    j["pairing"] = p.pairing();
  }
  return j;
}

CommSchedule schedule_by(const std::string& strategy, const TrafficMatrix& d, const ClusterSpec& cluster, std::uint64_t seed) {
  if (strategy == "aurora") return build_schedule(d, cluster);
  if (strategy == "rcs") return schedule_rcs(d, cluster, seed);
  if (strategy == "sjf") return schedule_sjf(d, cluster);
  throw ConfigError("strategies: '" + strategy + "' is not a scheduling strategy (aurora, rcs, sjf)");
}

// Accepts either a full experiment config or {"traffic": [[...]], "cluster": {...}}.
int cmd_schedule(const Overrides& o) {
  const Json root = read_json(o.config);
  const std::uint64_t seed = o.seed.value_or(root.value("seed", std::uint64_t{0}));
  const auto strategies = o.strategies ? split_list(*o.strategies) : std::vector<std::string>{"aurora"};
  std::vector<TrafficMatrix> matrices;
  ClusterSpec cluster;
  if (root.is_object() && root.contains("traffic")) {
    matrices.push_back(detail::parse_traffic(root.at("traffic"), "traffic"));
    if (root.contains("cluster")) {
      Json wrapper = root;
      wrapper.erase("traffic");
      wrapper["scenario"] = "exclusive-homo";
      wrapper["models"] = Json::array({Json{{"layers", Json::array({Json{{"gate_work", 0},
                                                                           {"agg_work", 0},
                                                                           {"ffn_work_per_token", 0},
                                                                           {"ffn_base_work", 0},
                                                                           {"traffic", root.at("traffic")}}})}}});
      cluster = config_from_json(wrapper).cluster;
    } else {
      cluster = ClusterSpec::uniform(matrices.front().size());
    }
  } else {
    // Scheduling strategies are not experiment strategies; validate the rest only.
    Overrides rest = o;
    rest.strategies.reset();
    const ExperimentConfig c = load_with_overrides(rest);
    cluster = c.cluster;
    for (const auto& m : c.models)
      for (const auto& l : m.profile.layers) matrices.push_back(l.dispatch);
  }
  Json out = Json::array();
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const double b = bmax_heterogeneous(time_normalize(matrices[k], cluster));
    for (const auto& s : strategies) {
      Json entry = schedule_json(schedule_by(s, matrices[k], cluster, layer_seed(seed, k)), b);
      entry["strategy"] = s;
      entry["matrix"] = k;
      out.push_back(std::move(entry));
    }
  }
  emit(o.out, out.dump(2) + "\n");
  return 0;
}

int cmd_place(const Overrides& o) {
  const ExperimentConfig c = load_with_overrides(o);
  const std::size_t n = c.cluster.size();
  Json out = Json::array();
  for (const auto& strategy : c.strategies) {
    for (std::size_t l = 0; l < c.models.front().profile.layers.size(); ++l) {
      const std::uint64_t seed = layer_seed(c.seed, l);
      const auto& la = c.models[0].profile.layers[l];
      Json entry{{"strategy", strategy}, {"layer", l}};
      if (strategy == "same-model") {
        Json pairs = Json::array();
        for (std::size_t m = 0; m < 2; ++m) {
          Json model_pairs = Json::array();
          for (const auto& [e, f] : colocate_same_model(c.models[m].profile.layers[l])) model_pairs.push_back(Json::array({e, f}));
          pairs.push_back(std::move(model_pairs));
        }
        entry["same_model_pairs"] = std::move(pairs);
      } else if (!is_colocated(c.scenario)) {
        DeploymentPlan p = c.scenario == Scenario::ExclusiveHomo ? DeploymentPlan::exclusive(identity_permutation(n))
                                                                 : assign_exclusive_hetero(la.tokens_received(), c.cluster);
        if (strategy == "rga") p = assign_rga(n, c.cluster, seed);
        entry["plan"] = plan_json(p);
      } else {
        const auto& lb = c.models[1].profile.layers[l];
        const bool hetero = c.scenario == Scenario::ColocHetero;
        DeploymentPlan p;
        if (strategy == "aurora") {
          p = hetero ? colocate_heterogeneous(la, lb, c.cluster) : colocate_homogeneous(la, lb);
        } else {
          const auto partner =
              strategy == "rec" ? colocate_rec(n, seed) : pair_experts(load_vector(la.dispatch), load_vector(lb.dispatch)).partner;
          p = plan_from_pairing(partner, hetero ? assign_rga(n, c.cluster, seed).assignment_a() : identity_permutation(n));
        }
        entry["plan"] = plan_json(p);
      }
      out.push_back(std::move(entry));
    }
  }
  emit(o.out, out.dump(2) + "\n");
  return 0;
}

int report(const ExperimentResult& r, const std::string& out) {
  write_results(r, out);
  for (const auto& e : r.errors)
    std::cerr << "error: " << e.scenario << "/" << e.strategy << (e.layer ? "/layer " + std::to_string(*e.layer) : "") << ": "
              << e.message << "\n";
  return r.ok() ? 0 : 1;
}

int cmd_simulate(const Overrides& o) {
  const ExperimentConfig c = load_with_overrides(o);
  return report(run_experiment(c), o.out.empty() ? c.output : o.out);
}

int cmd_experiment(const Overrides& o, std::uint64_t repeats) {
  const ExperimentConfig c = load_with_overrides(o);
  return report(run_sweep(c, repeats), o.out.empty() ? c.output : o.out);
}

int cmd_oracle(const Overrides& o) {
  const ExperimentConfig c = load_with_overrides(o);
  if (c.scenario != Scenario::ColocHetero) throw ConfigError("scenario: oracle requires coloc-hetero");
  Json out = Json::array();
  for (std::size_t l = 0; l < c.models.front().profile.layers.size(); ++l) {
    const auto best = brute_force_colocation_hetero(evaluation_layer(c.models[0].profile, l, c.noise_level),
                                                    evaluation_layer(c.models[1].profile, l, c.noise_level), c.cluster, c.oracle_cap);
    out.push_back(Json{{"layer", l}, {"time", best.time}, {"evaluated", best.evaluated}, {"plan", plan_json(best.plan)}});
  }
  emit(o.out, out.dump(2) + "\n");
  return 0;
}

void add_common(CLI::App* cmd, Overrides& o, bool with_out = true) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  if (with_out) cmd->add_option("--out", o.out, "Output path");
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--scenario", o.scenario, "Override the scenario");
  cmd->add_option("--strategies", o.strategies, "Comma-separated strategy list");
  cmd->add_option("--noise", o.noise, "Noise level: 0, 0.25, 0.5 or 0.75");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoE deployment optimizer and analytical simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::uint64_t repeats = 1;

  auto* schedule = app.add_subcommand("schedule", "Emit all-to-all schedules for each traffic matrix");
  auto* place = app.add_subcommand("place", "Emit deployment plans");
  auto* simulate = app.add_subcommand("simulate", "Run one scenario and write CSV + JSON results");
  auto* experiment = app.add_subcommand("experiment", "Sweep noise levels and seeds");
  auto* oracle = app.add_subcommand("oracle", "Brute-force optimal colocation (coloc-hetero)");
  for (auto* cmd : {schedule, place, simulate, experiment, oracle}) add_common(cmd, o);
  experiment->add_option("--repeats", repeats, "Runs per noise level with consecutive seeds")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (schedule->parsed()) return cmd_schedule(o);
    if (place->parsed()) return cmd_place(o);
    if (simulate->parsed()) return cmd_simulate(o);
    if (experiment->parsed()) return cmd_experiment(o, repeats);
    if (oracle->parsed()) return cmd_oracle(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
