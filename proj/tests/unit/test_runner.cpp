#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "chaosbench/runner.hpp"

using namespace chaosbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chaosbench_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json minimal() {
  return json::parse(R"({
    "model": {"type": "zero"},
    "init": {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]},
    "grid": {"T": 1.0, "n_steps": 20},
    "N_sweep": [1, 2],
    "replicas": 400,
    "seed": 3,
    "kappa": 0.5,
    "checks": ["entropy-report"],
    "output": "unused"
  })");
}

}  // namespace

TEST(Runner, ZeroDriftEntropyReportIsZero) {
  const auto dir = scratch("zero");
  const auto res = run_experiment(parse_config(minimal()), dir.string());
  ASSERT_EQ(res.checks.size(), 1u);
  EXPECT_EQ(res.checks[0].status, "pass") << res.checks[0].message;
  EXPECT_EQ(res.exit_code, 0);
  const auto csv = slurp(dir / "entropy_report.csv");
  EXPECT_NE(csv.find("kl_wiener_per_particle[N=1],0,0"), std::string::npos) << csv;
  EXPECT_NE(csv.find("kl_wiener_per_particle[N=2],0,0"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "density_N2_t1.csv"));
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["config_hash"], res.config_hash);
  EXPECT_EQ(manifest["versions"]["kac_dictionary"], KacDictionary::kVersion);
  EXPECT_EQ(manifest["checks"][0]["status"], "pass");
}

TEST(Runner, WritePathsRoundTrips) {
  json j = minimal();
  j["N_sweep"] = {2};
  j["options"] = {{"write_paths", true}};
  const auto dir = scratch("paths");
  const auto c = parse_config(j);
  ASSERT_EQ(run_experiment(c, dir.string()).exit_code, 0);
  auto back = path_io::read((dir / "paths_N2.bin").string());
  const auto fresh = simulate_forward(c.model, c.init, c.grid, 2, c.replicas, derive_seed(c.seed, hash_name("entropy-report")));
  // read-back ensembles are tagged with their file, not the drift
  back.set_drift_id(fresh.drift_id());
  EXPECT_EQ(back, fresh);
}

TEST(Runner, OracleValidateResolvesConvention) {
  json j = minimal();
  j["checks"] = {"oracle-validate"};
  const auto dir = scratch("oracle");
  const auto res = run_experiment(parse_config(j), dir.string());
  ASSERT_EQ(res.exit_code, 0) << res.checks[0].message;
  EXPECT_EQ(res.manifest["convention"]["kappa"], 0.5);
  EXPECT_EQ(res.manifest["convention"]["boundary"], "H(rho_T)-H(rho_0)");
  EXPECT_TRUE(fs::exists(dir / "oracle_report.csv"));
}

// A failing check is recorded and the others still run.
TEST(Runner, FailureDoesNotAbortLaterChecks) {
  json j = minimal();
  j["model"] = {{"type", "linear"}, {"A", {{-1.0}}}};
  j["N_sweep"] = {1};
  j["checks"] = {"entropy-report", "continuity-check"};
  j["options"] = {{"continuity", {{"tolerance", 0.0}}}};
  const auto dir = scratch("fail");
  const auto res = run_experiment(parse_config(j), dir.string());
  ASSERT_EQ(res.checks.size(), 2u);
  EXPECT_EQ(res.find("entropy-report")->status, "pass");
  EXPECT_EQ(res.find("continuity-check")->status, "fail");
  EXPECT_EQ(res.exit_code, 1);
  EXPECT_TRUE(fs::exists(dir / "continuity_report.csv"));
}

TEST(Runner, CannedConfigsParse) {
  for (const char* n : {"chaos-sweep", "reversal-check", "entropy-report", "simulate", "oracle-validate"}) {
    EXPECT_NO_THROW(parse_config(canned_config(n))) << n;
  }
  EXPECT_THROW(canned_config("nope"), ConfigError);
}

TEST(CsvTable, QuotesCellsWithSeparators) {
  CsvTable t({"name", "v"});
  t.row({"N((1,0),\"a\")", "1"});
  EXPECT_EQ(t.str(), "name,v\n\"N((1,0),\"\"a\"\")\",1\n");
  EXPECT_THROW(t.row({"only one"}), InputError);
}
