#include <gtest/gtest.h>

#include "chaosbench/config.hpp"

using namespace chaosbench;

namespace {

json base() {
  return json::parse(R"({
    "model": {"type": "linear_mean_field", "theta": 0.5, "confinement": 1.0},
    "limit_model": {"type": "closed_form_limit", "alpha": -1.5, "beta": 0.5},
    "init": {"type": "gaussian", "mean": [0.0], "cov": [[0.5]]},
    "grid": {"T": 1.0, "n_steps": 40},
    "N_sweep": [2, 8],
    "replicas": 200,
    "seed": 7,
    "kappa": 0.5,
    "checks": ["chaos-sweep"],
    "output": "out/a"
  })");
}

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ParsesLinearMeanField) {
  const auto c = parse_config(base());
  EXPECT_EQ(c.N_sweep, (std::vector<std::size_t>{2, 8}));
  EXPECT_EQ(c.grid.n_steps(), 40u);
  EXPECT_TRUE(c.wants("chaos-sweep"));
  EXPECT_FALSE(c.wants("reversal-check"));
  ASSERT_TRUE(c.limit_model.has_value());
  EXPECT_TRUE(std::holds_alternative<ClosedFormLimit>(c.limit_model->payload()));
}

TEST(Config, UnsortedSweepRejected) {
  json j = base();
  j["N_sweep"] = {8, 4};
  EXPECT_NE(config_error(j).find("N_sweep: not increasing"), std::string::npos);
}

TEST(Config, UnknownKeysReportTheirPath) {
  json j = base();
  j["model"]["thetta"] = 1.0;
  EXPECT_EQ(config_error(j), "model.thetta: unknown key");
  json k = base();
  k["bogus"] = 1;
  EXPECT_EQ(config_error(k), "bogus: unknown key");
}

TEST(Config, MissingFieldsAndBadValues) {
  json j = base();
  j.erase("grid");
  EXPECT_EQ(config_error(j), "grid: required");
  json k = base();
  k["kappa"] = 0.7;
  EXPECT_NE(config_error(k), "");
  json r = base();
  r["replicas"] = 50;
  EXPECT_NE(config_error(r).find("replicas"), std::string::npos);
  json c = base();
  c["checks"] = {"chaos-sweep", "chaos-sweep"};
  EXPECT_NE(config_error(c), "");
  json u = base();
  u["checks"] = {"teleport"};
  EXPECT_NE(config_error(u), "");
  json l = base();
  l.erase("limit_model");
  EXPECT_EQ(config_error(l), "limit_model: required by chaos-sweep");
}

TEST(Config, ReversalNeedsSingleParticleModel) {
  json j = base();
  j["checks"] = {"reversal-check"};
  EXPECT_NE(config_error(j), "");
  j["model"] = {{"type", "linear"}, {"A", {{-1.0}}}};
  EXPECT_EQ(config_error(j), "");
}

TEST(Config, TimesMustBeGridNodes) {
  json j = base();
  j["options"] = {{"chaos", {{"tv_times", {0.33}}}}};
  EXPECT_NE(config_error(j), "");
}

TEST(Config, DriftJsonRoundTrip) {
  const TimeGrid g(1.0, 40);
  const auto init = InitialLaw::gaussian_scalar(0.0, 0.5);
  const std::vector<json> docs = {
      {{"type", "zero"}},
      {{"type", "constant"}, {"c", {0.5}}},
      {{"type", "linear"}, {"A", {{-1.0}}}},
      {{"type", "linear_mean_field"}, {"theta", 0.5}, {"confinement", 1.0}},
      {{"type", "pairwise"},
       {"kernel", {{"type", "tanh"}, {"coefficient", 0.3}, {"length", 2.0}}},
       {"confinement", {{"type", "quartic"}, {"coefficient", 0.1}}}},
  };
  for (const auto& d : docs) {
    const auto a = drift_from_json(cfg::Field(d, "model"), 1, g, init);
    const json back = to_json(a);
    const auto b = drift_from_json(cfg::Field(back, "model"), 1, g, init);
    EXPECT_EQ(a.id(), b.id()) << d.dump();
  }
}

TEST(Config, HashIgnoresOutputOnly) {
  json j = base();
  const auto a = parse_config(j);
  j["output"] = "elsewhere";
  const auto b = parse_config(j);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  j["seed"] = 8;
  EXPECT_NE(parse_config(j).hash(), a.hash());
  EXPECT_EQ(parse_config(base(), 8).hash(), parse_config(j).hash());
}

TEST(Config, MissingFileIsConfigError) { EXPECT_THROW(load_config("/nonexistent/cfg.json"), ConfigError); }
