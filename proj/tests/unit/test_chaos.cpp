#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "chaosbench/chaos.hpp"
#include "chaosbench/oracle.hpp"

using namespace chaosbench;

namespace {

const InitialLaw kInit = InitialLaw::gaussian_scalar(0, 0.5);

DriftSpec limit_for(double theta, const TimeGrid& g) {
  return DriftSpec::closed_form_limit(-(1 + theta), theta, g, oracle_limit_mean(-(1 + theta), theta, kInit, g));
}

}  // namespace

TEST(MarginalPaths, FullAndComposed) {
  const TimeGrid g(1.0, 10);
  const auto p = simulate_forward(DriftSpec::linear_mean_field(0.5), kInit, g, 5, 20, 3);
  EXPECT_EQ(marginal_paths(p, 5), p);
  const auto m3 = marginal_paths(p, 3);
  EXPECT_EQ(m3.particles(), 3u);
  EXPECT_EQ(m3.marginal_source(), 5u);
  EXPECT_EQ(marginal_paths(m3, 2), marginal_paths(p, 2));
  EXPECT_EQ(m3.value(7, 4, 2, 0), p.value(7, 4, 2, 0));
  EXPECT_THROW(marginal_paths(p, 6), InputError);
}

TEST(MarginalPaths, FirstParticleMatchesPooledMarginal) {
  const TimeGrid g(1.0, 20);
  const auto p = simulate_forward(DriftSpec::linear_mean_field(0.5), kInit, g, 8, 4000, 9);
  const auto line = SpatialGrid::line(-5, 5, 201);
  const auto one = estimate_density_at(marginal_paths(p, 1), 20, line, 0.2);
  const auto all = estimate_density_at(p, 20, line, 0.2);
  EXPECT_LT(tv_distance(one, all), 0.06);
}

TEST(MarginalPaths, InteractingMarginalRejectedByGirsanov) {
  const TimeGrid g(1.0, 10);
  const auto mf = DriftSpec::linear_mean_field(0.5);
  const auto p = simulate_forward(mf, kInit, g, 4, 10, 3);
  EXPECT_THROW(path_relative_entropy_girsanov(marginal_paths(p, 2), mf, DriftSpec::zero(1)), MisuseError);
}

TEST(SlopeFit, ExactPowerLaw) {
  const std::vector<double> x{2, 8, 32, 128}, y{0.5, 0.125, 0.03125, 0.0078125};
  const auto f = fit_loglog(x, y);
  EXPECT_NEAR(f.slope, -1.0, 1e-12);
  EXPECT_NEAR(f.ci_half, 0.0, 1e-9);
  EXPECT_TRUE(std::isnan(fit_loglog(std::vector<double>{1, 2}, std::vector<double>{1, 2}).ci_half));
  EXPECT_THROW(fit_loglog(std::vector<double>{1, 2}, std::vector<double>{1, 0}), EstimationFailure);
}

TEST(SlopeFit, StudentQuantileForTwoDegrees) {
  // residuals +-e about a line give se = 2e / sqrt(2 sxx); the t quantile for df = 2 is 4.3027
  const std::vector<double> x{1, std::exp(1.0), std::exp(2.0), std::exp(3.0)};
  const double e = 0.01;
  const std::vector<double> y{std::exp(e), std::exp(1 - e), std::exp(2 - e), std::exp(3 + e)};
  const auto f = fit_loglog(x, y);
  EXPECT_NEAR(f.ci_half / f.stderr_, 4.302652729911275, 1e-9);
}

TEST(StrongChaos, ProductDynamicsGiveZero) {
  const TimeGrid g(1.0, 20);
  const auto b = DriftSpec::linear_scalar(-1.5);
  std::vector<PathEnsemble> ps;
  for (std::size_t N : {1u, 2u, 8u}) ps.push_back(simulate_forward(b, kInit, g, N, 50, 4));
  std::vector<ChaosRun> runs{{1, b, &ps[0]}, {2, b, &ps[1]}, {8, b, &ps[2]}};
  const auto c = strong_entropy_chaos_curve(runs, b, 0.5);
  for (const auto& v : c.value) EXPECT_EQ(v.value, 0.0);
  EXPECT_TRUE(std::isnan(c.slope.slope));
  EXPECT_TRUE(c.warnings.empty());
}

TEST(StrongChaos, PairwiseLimitRejected) {
  const TimeGrid g(1.0, 10);
  const auto mf = DriftSpec::linear_mean_field(0.5);
  const auto p = simulate_forward(mf, kInit, g, 2, 10, 1);
  std::vector<ChaosRun> runs{{2, mf, &p}};
  EXPECT_THROW(strong_entropy_chaos_curve(runs, mf, 0.5), MisuseError);
}

TEST(WeakChaos, ZeroDriftsGiveZeroGaps) {
  const TimeGrid g(1.0, 20);
  const auto z = DriftSpec::zero(1);
  const auto lim = simulate_forward(z, kInit, g, 8, 50, 4);
  const auto p2 = simulate_forward(z, kInit, g, 2, 50, 4);
  std::vector<ChaosRun> runs{{2, z, &p2}};
  const auto c = weak_entropy_chaos_curve(runs, z, lim, 1.0);
  EXPECT_EQ(c.limit.value, 0.0);
  EXPECT_EQ(c.value[0].value, 0.0);
  EXPECT_EQ(c.gap[0], 0.0);
}

TEST(WeakChaos, SingleParticleUnderLimitDriftHasNoGap) {
  const TimeGrid g(1.0, 40);
  const auto lim = limit_for(0.5, g);
  const auto run = simulate_forward(lim, kInit, g, 1, 200, 6);
  std::vector<ChaosRun> runs{{1, lim, &run}};
  const auto c = weak_entropy_chaos_curve(runs, lim, run, 0.5);
  EXPECT_EQ(c.gap[0], 0.0);
  EXPECT_THROW(weak_entropy_chaos_curve(runs, lim, run, 0.3), ConfigError);
}

TEST(KacMetric, SelfComparisonIsZero) {
  const TimeGrid g(1.0, 20);
  const auto p = simulate_forward(limit_for(0.5, g), kInit, g, 4, 300, 2);
  for (const auto& d : kac_chaos_metric(p, p, 1, {10, 20})) EXPECT_NEAR(d.distance, 0.0, 1e-14);
}

TEST(KacMetric, ProductDynamicsStayNearNoiseFloor) {
  const TimeGrid g(1.0, 20);
  const auto b = DriftSpec::linear_scalar(-1.0);
  const auto run = simulate_forward(b, kInit, g, 8, 1000, 7);
  const auto lim = simulate_forward(b, kInit, g, 8, 1000, 8);
  const auto d1 = kac_chaos_metric(run, lim, 1, {20});
  const auto d2 = kac_chaos_metric(run, lim, 2, {20});
  // single-marginal floor: 12 functions of sd <= 1 over 8000 draws, both sides
  const double floor = 3.0 * std::sqrt(2.0 / 8000.0);
  EXPECT_LT(d1[0].distance, floor);
  EXPECT_LT(d2[0].distance, 2.0 * floor);
}

TEST(KacMetric, Errors) {
  const TimeGrid g(1.0, 10);
  const auto p = simulate_forward(DriftSpec::zero(1), kInit, g, 2, 10, 2);
  EXPECT_THROW(kac_chaos_metric(p, p, 4, {5}), InputError);
  EXPECT_THROW(kac_chaos_metric(p, p, 3, {5}), InputError);
}

TEST(KacDictionaryTest, SupAndLipschitzAtMostOne) {
  for (std::size_t j = 0; j < KacDictionary::kMean; ++j) {
    for (double z = -6; z <= 6; z += 0.01) {
      EXPECT_LE(std::abs(KacDictionary::g(j, z)), 1.0);
      EXPECT_LE(std::abs(KacDictionary::g(j, z + 1e-4) - KacDictionary::g(j, z)), 1e-4 * (1 + 1e-9));
    }
  }
  for (std::size_t j = 0; j < KacDictionary::kProduct; ++j) {
    for (double z = -6; z <= 6; z += 0.01) {
      EXPECT_LE(std::abs(KacDictionary::h(j, z)), 1.0);
      EXPECT_LE(std::abs(KacDictionary::h(j, z + 1e-4) - KacDictionary::h(j, z)), 1e-4 * (1 + 1e-9));
    }
  }
}

TEST(WeakFunctional, ConstantFields) {
  const TimeGrid g(1.0, 50);
  const std::size_t R = 2000;
  const TestField zero{[](std::span<const double>, double, std::span<double> o) { o[0] = 0.0; }, 1.0, "zero"};
  const TestField one{[](std::span<const double>, double, std::span<double> o) { o[0] = 1.0; }, 1.0, "one"};
  const auto bm = simulate_forward(DriftSpec::zero(1), kInit, g, 1, R, 5);
  EXPECT_EQ(drift_weak_convergence_functional(bm, zero).value, 0.0);
  EXPECT_LT(std::abs(drift_weak_convergence_functional(bm, one).value), 3.0 / std::sqrt(double(R)));
  const auto cst = simulate_forward(DriftSpec::constant({0.7}), kInit, g, 1, R, 5);
  const auto v = drift_weak_convergence_functional(cst, one);
  EXPECT_NEAR(v.value, 0.7, 4.0 * v.stderr_);
}

TEST(WeakFunctional, BoundIsEnforced) {
  const TimeGrid g(1.0, 10);
  const auto p = simulate_forward(DriftSpec::zero(1), kInit, g, 1, 10, 5);
  const TestField big{[](std::span<const double> x, double, std::span<double> o) { o[0] = x[0]; }, 0.1, "identity"};
  EXPECT_THROW(drift_weak_convergence_functional(p, big), InputError);
}

TEST(WeakFunctionalProperty, LinearInTheField) {
  const TimeGrid g(1.0, 50);
  const auto p = simulate_forward(DriftSpec::linear_scalar(-1), kInit, g, 3, 300, 8);
  const TestField k1{[](std::span<const double> x, double, std::span<double> o) { o[0] = std::tanh(x[0]); }, 1.0, "k1"};
  const TestField k2{[](std::span<const double> x, double t, std::span<double> o) { o[0] = std::cos(x[0] + t); }, 1.0, "k2"};
  const double a = 0.3;
  const TestField mix{[&](std::span<const double> x, double t, std::span<double> o) {
                        o[0] = a * std::tanh(x[0]) + std::cos(x[0] + t);
                      },
                      1.3, "mix"};
  const double lhs = drift_weak_convergence_functional(p, mix).value;
  const double rhs = a * drift_weak_convergence_functional(p, k1).value + drift_weak_convergence_functional(p, k2).value;
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Monotonicity, ProductAndZeroDynamics) {
  const TimeGrid g(1.0, 20);
  const auto b = DriftSpec::linear_scalar(-1.0);
  const auto p = simulate_forward(b, kInit, g, 4, 100, 3);
  const auto m = monotonicity_check(p, b, 1, 0.5);
  EXPECT_EQ(m.lhs, m.rhs);
  EXPECT_TRUE(m.holds);
  const auto z = DriftSpec::zero(1);
  const auto pz = simulate_forward(z, kInit, g, 4, 100, 3);
  const auto mz = monotonicity_check(pz, z, 1, 1.0);
  EXPECT_EQ(mz.lhs, 0.0);
  EXPECT_EQ(mz.rhs, 0.0);
}

TEST(Monotonicity, MeanFieldProjectionBelowFull) {
  const TimeGrid g(1.0, 50);
  const auto mf = DriftSpec::linear_mean_field(0.5);
  const auto p = simulate_forward(mf, kInit, g, 32, 200, 12);
  const auto m = monotonicity_check(p, mf, 1, 0.5);
  EXPECT_TRUE(m.holds);
  EXPECT_LE(m.lhs, m.rhs);
  EXPECT_GT(m.lhs, 0.9 * m.rhs);
}

TEST(Monotonicity, Errors) {
  const TimeGrid g(1.0, 10);
  const auto mf = DriftSpec::linear_mean_field(0.5);
  const auto p = simulate_forward(mf, kInit, g, 4, 10, 1);
  EXPECT_THROW(monotonicity_check(p, mf, 2, 0.5), InputError);
  EXPECT_THROW(monotonicity_check(marginal_paths(p, 1), mf, 1, 0.5), InputError);
  EXPECT_THROW(monotonicity_check(p, DriftSpec::linear_mean_field(0.4), 1, 0.5), MisuseError);
}

TEST(EntropyLiminf, Cases) {
  const auto line = SpatialGrid::line(-10, 10, 2001);
  auto normal = [&](double var) {
    return density_from_function(line, [=](std::span<const double> x) {
      return std::exp(-0.5 * x[0] * x[0] / var) / std::sqrt(2 * std::numbers::pi * var);
    });
  };
  const std::vector<DensityEstimate> same(3, normal(1.0));
  EXPECT_TRUE(entropy_liminf_check(same, normal(1.0), 10.0).holds);
  std::vector<DensityEstimate> seq;
  for (double N : {8.0, 32.0, 128.0}) seq.push_back(normal(1.0 + 1.0 / N));
  const auto r = entropy_liminf_check(seq, normal(1.0), 10.0);
  EXPECT_TRUE(r.holds);
  // int rho log rho rises towards the limit value from below as the variance shrinks
  EXPECT_LT(r.h[0], r.h[1]);
  EXPECT_LT(r.h[2], r.h_limit);
  EXPECT_NEAR(r.h_limit, -0.5 * std::log(2 * std::numbers::pi * std::numbers::e), 1e-6);
  EXPECT_THROW(entropy_liminf_check(seq, normal(1.0), 0.5), PreconditionFailure);
}

TEST(ChaosSweep, SmallLinearMeanFieldReport) {
  const TimeGrid g(1.0, 40);
  ChaosSweepOptions o;
  o.N_sweep = {2, 8, 32};
  o.replicas = 400;
  o.chunk = 150;
  o.seed = 3;
  const auto rep = run_chaos_sweep(DriftSpec::linear_mean_field(0.5), limit_for(0.5, g), kInit, g, o);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.pairs.size(), 15u);
  for (const auto& p : rep.pairs) EXPECT_TRUE(p.holds) << p.label;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = rep.rows[i];
    EXPECT_NEAR(r.strong.value, oracle_strong_chaos_value(0.5, r.N, kInit, g, 0.5), 0.15 * r.strong.value);
    EXPECT_TRUE(r.monotonicity.holds);
    // fixed-time TV is dominated by the strong-chaos entropy
    for (double tv : r.tv) EXPECT_LE(tv * tv, 2.0 * r.strong.value + 0.01);
  }
  // strong implies weak
  EXPECT_GT(rep.rows[0].strong.value, rep.rows[2].strong.value);
  EXPECT_GT(std::abs(rep.rows[0].gap), std::abs(rep.rows[2].gap));
  EXPECT_NEAR(rep.slope.slope, -1.0, 0.2);
  const auto csv = rep.csv("h").str();
  EXPECT_NE(csv.find("\nslope,"), std::string::npos);
  EXPECT_NE(csv.find(",slope_ci,"), std::string::npos);
}

TEST(ChaosSweep, ChunkingDoesNotChangeResults) {
  const TimeGrid g(1.0, 20);
  ChaosSweepOptions o;
  o.N_sweep = {2, 4};
  o.replicas = 60;
  o.seed = 5;
  o.tv_times = {0.5, 1.0};
  o.kac_times = {1.0};
  o.chunk = 60;
  const auto a = run_chaos_sweep(DriftSpec::linear_mean_field(0.5), limit_for(0.5, g), kInit, g, o).csv().str();
  o.threads = 3;
  const auto b = run_chaos_sweep(DriftSpec::linear_mean_field(0.5), limit_for(0.5, g), kInit, g, o).csv().str();
  EXPECT_EQ(a, b);
}

TEST(ChaosSweep, RejectsUnsortedSweep) {
  const TimeGrid g(1.0, 20);
  ChaosSweepOptions o;
  o.N_sweep = {8, 4};
  o.replicas = 10;
  EXPECT_THROW(run_chaos_sweep(DriftSpec::linear_mean_field(0.5), limit_for(0.5, g), kInit, g, o), ConfigError);
}
