#include <gtest/gtest.h>

#include "moesched/config.hpp"

using namespace moesched;

namespace {

const char* kMinimal = R"({
  "scenario": "exclusive-homo",
  "cluster": {"gpus": [{"bandwidth": 10}, {"bandwidth": 10}]},
  "models": [{"model_id": "m", "layers": [
    {"gate_work": 2, "agg_work": 1, "ffn_work_per_token": 0, "ffn_base_work": 7, "traffic": [[0, 5], [5, 0]]}]}]
})";

const char* kColoc = R"({
  "scenario": "coloc-hetero",
  "cluster": {"gpus": [{"bandwidth": 100, "compute_scale": 1}, {"bandwidth": 50, "compute_scale": 0.5},
                       {"bandwidth": 80}, {"bandwidth": 40, "compute_scale": 0.4}]},
  "models": [
    {"model_id": "a", "synthetic": {"n": 4, "skew": 1.5, "layer_count": 4, "seed": 3}},
    {"model_id": "b", "synthetic": {"n": 4, "seed": 4, "total_tokens": 100}}
  ],
  "strategies": ["rga", "aurora"],
  "noise_level": 0.75,
  "seed": 12,
  "output": "out/x.csv",
  "oracle_cap": 4
})";

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string with(const char* base, const std::string& key, const Json& value) {
  Json j = Json::parse(base);
  j[key] = value;
  return j.dump();
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const auto c = parse_config(kMinimal);
  EXPECT_EQ(c.scenario, Scenario::ExclusiveHomo);
  EXPECT_EQ(c.cluster.size(), 2u);
  EXPECT_EQ(c.cluster[0].compute_scale, 1.0);
  EXPECT_EQ(c.strategies, (std::vector<std::string>{"aurora", "rcs", "sjf"}));
  EXPECT_EQ(c.noise_level, 0.0);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.output, "results.csv");
  EXPECT_EQ(c.oracle_cap, 6u);
  EXPECT_EQ(c.models[0].profile.model_id, "m");
  EXPECT_EQ(c.models[0].profile.layers[0].dispatch(0, 1), 5.0);
}

TEST(Config, StrategyDefaultsPerScenario) {
  EXPECT_EQ(strategies_for(Scenario::ExclusiveHetero), (std::vector<std::string>{"aurora", "rcs", "sjf", "rga"}));
  EXPECT_EQ(strategies_for(Scenario::ColocHomo), (std::vector<std::string>{"aurora", "rec", "same-model"}));
  EXPECT_EQ(strategies_for(Scenario::ColocHetero), (std::vector<std::string>{"aurora", "rec", "rga", "same-model"}));
}

TEST(Config, SyntheticModels) {
  const auto c = parse_config(kColoc);
  ASSERT_EQ(c.models.size(), 2u);
  ASSERT_TRUE(c.models[0].synthetic.has_value());
  EXPECT_EQ(c.models[0].synthetic->skew, 1.5);
  EXPECT_EQ(c.models[1].profile.layers.size(), 4u);
  EXPECT_EQ(c.models[1].profile.layers[0].dispatch.total(), 100.0);
  EXPECT_EQ(c.oracle_cap, 4u);
}

TEST(Config, ColocatedScenarioWithOneModelNamesModels) {
  Json j = Json::parse(kColoc);
  j["models"].erase(1);
  const auto err = error_of(j.dump());
  EXPECT_EQ(err.rfind("models:", 0), 0u) << err;
}

TEST(Config, ZeroBandwidthNamesTheField) {
  Json j = Json::parse(kMinimal);
  j["cluster"]["gpus"][1]["bandwidth"] = 0;
  EXPECT_EQ(error_of(j.dump()).rfind("cluster.gpus[1].bandwidth", 0), 0u) << error_of(j.dump());
}

TEST(Config, RejectsBadInputs) {
  EXPECT_NE(error_of(with(kMinimal, "colour", "red")).find("colour"), std::string::npos);
  EXPECT_EQ(error_of(with(kMinimal, "noise_level", 0.3)).rfind("noise_level", 0), 0u);
  EXPECT_EQ(error_of(with(kMinimal, "noise_level", 0.25)).rfind("noise_level", 0), 0u);  // one layer only
  EXPECT_EQ(error_of(with(kMinimal, "scenario", "mystery")).rfind("scenario", 0), 0u);
  EXPECT_EQ(error_of(with(kMinimal, "strategies", Json::array({"rec"}))).rfind("strategies[0]", 0), 0u);
  EXPECT_EQ(error_of(with(kMinimal, "strategies", Json::array({"aurora", "aurora"}))).rfind("strategies[1]", 0), 0u);
  EXPECT_EQ(error_of(with(kMinimal, "seed", -1)).rfind("seed", 0), 0u);
  EXPECT_EQ(error_of("{").rfind("parse error", 0), 0u);

  Json j = Json::parse(kMinimal);
  j["models"][0]["layers"][0]["traffic"] = Json::array({Json::array({0, -1}), Json::array({5, 0})});
  EXPECT_EQ(error_of(j.dump()).rfind("models[0].layers[0].traffic[0][1]", 0), 0u) << error_of(j.dump());
  j["models"][0]["layers"][0]["traffic"] = Json::array({Json::array({1, 1}), Json::array({5, 0})});
  EXPECT_EQ(error_of(j.dump()).rfind("models[0].layers[0].traffic[0][0]", 0), 0u) << error_of(j.dump());
  j["models"][0]["layers"][0]["traffic"] = Json::array({Json::array({0, 1, 2}), Json::array({5, 0, 1}), Json::array({1, 1, 0})});
  EXPECT_EQ(error_of(j.dump()).rfind("models[0]:", 0), 0u) << error_of(j.dump());
}

TEST(Config, SameModelNeedsEvenGpuCount) {
  Json j = Json::parse(kColoc);
  j["cluster"]["gpus"].erase(3);
  j["models"][0]["synthetic"]["n"] = 3;
  j["models"][1]["synthetic"]["n"] = 3;
  j["strategies"] = Json::array({"same-model"});
  EXPECT_EQ(error_of(j.dump()).rfind("strategies", 0), 0u);
}

TEST(Config, SerializationRoundTrips) {
  for (const char* text : {kMinimal, kColoc}) {
    const std::string once = serialize(parse_config(text));
    const std::string twice = serialize(parse_config(once));
    EXPECT_EQ(once, twice);
  }
}
