#include <gtest/gtest.h>

#include <numbers>

#include "chaosbench/reversal.hpp"

using namespace chaosbench;

namespace {

// OU started off-centre so the marginals move over [0, 1].
const DriftSpec kOu = DriftSpec::linear_scalar(-1.0);
const InitialLaw kStart = InitialLaw::gaussian_scalar(1.0, 0.25);

PathEnsemble ou_paths(std::size_t R, std::uint64_t seed, const TimeGrid& g) {
  return simulate_forward(kOu, kStart, g, 1, R, seed);
}

}  // namespace

TEST(Duality, ResidualSmallForOrnsteinUhlenbeck) {
  const TimeGrid g(1.0, 100);
  const auto p = ou_paths(4000, 21, g);
  DualityOptions opt;
  opt.window = 20;
  const auto rep = duality_residual(p, kOu, {25, 50, 75}, opt);
  ASSERT_EQ(rep.per_time.size(), 3u);
  EXPECT_GT(rep.per_time[1].reliable_bins, 1u);
  EXPECT_LE(rep.l2, rep.sup + 1e-12);
  // increments carry noise of variance 1/dt, plus an O(dt) bias
  for (const auto& r : rep.rows) {
    ASSERT_TRUE(std::isfinite(r.residual));
    if (r.reliable) {
      EXPECT_LT(std::abs(r.residual), 4.0 * r.stderr_ + 0.05) << "t=" << r.t << " bin " << r.bin;
    }
  }
  const auto csv = rep.csv("abc").str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x,b_forward,b_backward_est,score_est,residual,reliable,config_hash");
}

TEST(Duality, WrongDriftIsMisuse) {
  const TimeGrid g(1.0, 50);
  const auto p = ou_paths(200, 1, g);
  EXPECT_THROW(duality_residual(p, DriftSpec::zero(1), {25}), MisuseError);
}

TEST(Duality, EndpointTimesRejected) {
  const TimeGrid g(1.0, 50);
  const auto p = ou_paths(200, 1, g);
  EXPECT_THROW(duality_residual(p, kOu, {0}), InputError);
  EXPECT_THROW(duality_residual(p, kOu, {50}), InputError);
}

TEST(Duality, NoReliableBinIsEstimationFailure) {
  const TimeGrid g(1.0, 50);
  const auto p = ou_paths(200, 1, g);
  DualityOptions opt;
  opt.bins = Bins::line(20.0, 30.0, 2);
  EXPECT_THROW(duality_residual(p, kOu, {25}, opt), EstimationFailure);
}

TEST(Duality, MergedChunksMatchSinglePass) {
  const TimeGrid g(1.0, 40);
  const auto whole = ou_paths(300, 5, g);
  DualityOptions opt;
  opt.window = 5;
  DualityAccumulator acc(kOu, g, {20}, opt);
  simulate_in_chunks(kOu, sampler_for(kStart), 1, g, 1, 300, 5, 100, {}, [&](const PathEnsemble& c) { acc.add(c); });
  const auto a = acc.finalize();
  const auto b = duality_residual(whole, kOu, {20}, opt);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_NEAR(a.rows[i].residual, b.rows[i].residual, 1e-9);
}

TEST(Reversal, ReindexedPathsReproduceForwardMarginals) {
  const TimeGrid g(1.0, 40);
  const auto p = ou_paths(500, 3, g);
  const auto rev = reverse_paths(p);
  const SpatialGrid line = SpatialGrid::line(-6, 6, 241);
  for (std::size_t s : {10u, 20u, 30u}) {
    const auto a = estimate_density_at(rev, s, line, 0.2);
    const auto b = estimate_density_at(p, 40 - s, line, 0.2);
    EXPECT_EQ(tv_distance(a, b), 0.0);
  }
  EXPECT_EQ(reverse_paths(rev), p);
}

TEST(Reversal, ResimulatedMarginalsAgree) {
  const TimeGrid g(1.0, 100);
  const auto p = ou_paths(5000, 8, g);
  ReversalOptions opt;
  opt.replicas = 5000;
  opt.bandwidth = 0.15;
  opt.seed = 8;
  const auto chk = reversed_marginal_check(p, kOu, {25, 50, 75}, opt);
  ASSERT_EQ(chk.tv.size(), 3u);
  for (double tv : chk.tv) EXPECT_LT(tv, 0.08);
  EXPECT_GE(chk.min_coverage, 0.99);
  for (const auto& c : chk.pairs) EXPECT_TRUE(c.holds) << c.label;
}

TEST(Reversal, InteractingDriftIsMisuse) {
  const TimeGrid g(1.0, 20);
  EXPECT_THROW(ReversalAccumulator(DriftSpec::linear_mean_field(0.5), g, {10}), MisuseError);
}

TEST(Reversal, ThinCoverageFails) {
  const TimeGrid g(1.0, 40);
  const auto p = ou_paths(500, 3, g);
  ReversalOptions opt;
  opt.replicas = 200;
  opt.reliable_fraction = 0.5;
  EXPECT_THROW(reversed_marginal_check(p, kOu, {20}, opt), CoverageFailure);
}

TEST(Duality, ConstantDriftResidualWithinNoise) {
  const TimeGrid g(1.0, 100);
  const DriftSpec c = DriftSpec::constant({1.0});
  const auto p = simulate_forward(c, InitialLaw::gaussian_scalar(0, 1), g, 1, 4000, 4);
  DualityOptions opt;
  opt.window = 20;
  opt.bins = Bins::line(-1.0, 3.0, 4);
  const auto rep = duality_residual(p, c, {50}, opt);
  for (const auto& r : rep.rows) {
    if (r.reliable) {
      EXPECT_LT(std::abs(r.residual), 4.0 * r.stderr_ + 0.05) << "bin " << r.bin;
    }
  }
}

TEST(Reversal, BrownianReversedMarginalMatchesHeatKernel) {
  const TimeGrid g(1.0, 100);
  const auto p = simulate_forward(DriftSpec::zero(1), InitialLaw::gaussian_scalar(0, 1), g, 1, 5000, 12);
  ReversalOptions opt;
  opt.replicas = 5000;
  opt.bandwidth = 0.15;
  ReversalAccumulator acc(DriftSpec::zero(1), g, {50}, opt);
  acc.add(p);
  const auto chk = acc.finalize();
  const auto exact = density_from_function(opt.density_grid, [](std::span<const double> x) {
    return std::exp(-x[0] * x[0] / 3.0) / std::sqrt(3.0 * std::numbers::pi);
  });
  EXPECT_LT(chk.tv[0], 0.08);
  const auto rev_check = chk.pairs[0];
  EXPECT_TRUE(rev_check.holds);
  // the forward KDE itself sits close to the heat kernel
  EXPECT_LT(tv_distance(estimate_density_at(p, 50, opt.density_grid, 0.15), exact), 0.06);
}

// Backward drift of the reversed ensemble is the forward drift again.
TEST(ReversalProperty, DoubleReversalRecoversForwardDrift) {
  const TimeGrid g(1.0, 100);
  const auto p = ou_paths(4000, 31, g);
  const Bins bins = Bins::line(-0.5, 2.5, 6);
  const auto est = estimate_backward_drift(reverse_paths(p), 50, bins, 20);
  for (const auto& s : est.stats) {
    if (!s.reliable) continue;
    EXPECT_LT(std::abs(s.value[0] + s.location[0]), 2.0 * (4.0 * s.stderr_[0] + 0.05)) << "x=" << s.location[0];
  }
}

TEST(ReversalProperty, StationaryGradientDriftIsReversible) {
  const TimeGrid g(1.0, 100);
  const auto p = simulate_forward(kOu, InitialLaw::gaussian_scalar(0, 0.5), g, 1, 4000, 41);
  const Bins bins = Bins::line(-1.5, 1.5, 6);
  const auto fwd = estimate_drift_from_paths(p, 50, bins, 20);
  const auto bwd = estimate_backward_drift(p, 50, bins, 20);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (!fwd.stats[b].reliable || !bwd.stats[b].reliable) continue;
    const double se = std::hypot(fwd.stats[b].stderr_[0], bwd.stats[b].stderr_[0]);
    EXPECT_LT(std::abs(fwd.stats[b].value[0] - bwd.stats[b].value[0]), 4.0 * se + 0.05) << "bin " << b;
  }
}
