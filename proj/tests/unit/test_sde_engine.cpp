#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "chaosbench/sde_engine.hpp"

using namespace chaosbench;

namespace {

std::pair<double, double> moments_at(const PathEnsemble& p, std::size_t slot) {
  double s = 0, ss = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < p.replicas(); ++r) {
    for (double v : p.state(r, slot)) {
      s += v;
      ss += v * v;
      ++n;
    }
  }
  const double m = s / n;
  return {m, ss / n - m * m};
}

SimulationOptions terminal_only(const TimeGrid& g) { return {0, {0, g.n_steps()}, 1, 1e6}; }

}  // namespace

TEST(SimulateForward, BrownianTerminalMoments) {
  const TimeGrid g(1.0, 100);
  const std::size_t R = 20000;
  const auto p = simulate_forward(DriftSpec::zero(1), InitialLaw::point_mass({0}), g, 1, R, 11, terminal_only(g));
  const auto [m, v] = moments_at(p, 1);
  EXPECT_NEAR(m, 0.0, 3.0 / std::sqrt(R));
  EXPECT_NEAR(v, 1.0, 4.0 * std::sqrt(2.0 / R));
}

TEST(SimulateForward, ConstantDriftShiftsMean) {
  const TimeGrid g(2.0, 50);
  const std::size_t R = 20000;
  const auto p = simulate_forward(DriftSpec::constant({0.7}), InitialLaw::point_mass({0}), g, 1, R, 12, terminal_only(g));
  EXPECT_NEAR(moments_at(p, 1).first, 1.4, 3.0 * std::sqrt(2.0 / R));
}

TEST(SimulateForward, StationaryOrnsteinUhlenbeckVariance) {
  const TimeGrid g(1.0, 200);
  const std::size_t R = 20000;
  SimulationOptions opt{0, {0, 50, 100, 150, 200}, 1, 1e6};
  const auto p = simulate_forward(DriftSpec::linear_scalar(-1.0), InitialLaw::gaussian_scalar(0, 0.5), g, 1, R, 13, opt);
  // Euler-Maruyama stationary variance is 1/(2 - dt), within the tolerance
  for (std::size_t s = 0; s < p.slots(); ++s) EXPECT_NEAR(moments_at(p, s).second, 0.5, 4.0 * 0.5 * std::sqrt(2.0 / R));
}

TEST(SimulateForward, InitialSliceFollowsInitialLaw) {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.6, 0.6, 2.0;
  const auto init = InitialLaw::gaussian({1.0, -1.0}, cov);
  const TimeGrid g(1.0, 1);
  const auto p = simulate_forward(DriftSpec::zero(2), init, g, 4, 10000, 14);
  double m0 = 0, m1 = 0, c00 = 0, c01 = 0, c11 = 0;
  const double n = 40000;
  for (std::size_t r = 0; r < p.replicas(); ++r) {
    for (std::size_t i = 0; i < 4; ++i) {
      const double a = p.value(r, 0, i, 0), b = p.value(r, 0, i, 1);
      m0 += a / n;
      m1 += b / n;
      c00 += a * a / n;
      c01 += a * b / n;
      c11 += b * b / n;
    }
  }
  EXPECT_NEAR(m0, 1.0, 0.02);
  EXPECT_NEAR(m1, -1.0, 0.03);
  EXPECT_NEAR(c00 - m0 * m0, 1.0, 0.04);
  EXPECT_NEAR(c01 - m0 * m1, 0.6, 0.04);
  EXPECT_NEAR(c11 - m1 * m1, 2.0, 0.08);
}

TEST(SimulateForward, BitExactAcrossThreadsAndChunks) {
  const TimeGrid g(1.0, 40);
  const auto drift = DriftSpec::linear_mean_field(0.5);
  const auto init = InitialLaw::gaussian_scalar(0, 0.5);
  const auto serial = simulate_forward(drift, init, g, 8, 37, 99);
  SimulationOptions opt;
  opt.threads = 4;
  const auto threaded = simulate_forward(drift, init, g, 8, 37, 99, opt);
  EXPECT_TRUE(serial == threaded);
  std::size_t r = 0;
  simulate_in_chunks(drift, sampler_for(init), 1, g, 8, 37, 99, 10, {}, [&](const PathEnsemble& block) {
    for (std::size_t b = 0; b < block.replicas(); ++b, ++r) {
      for (std::size_t s = 0; s < block.slots(); ++s) {
        auto x = block.state(b, s);
        auto y = serial.state(r, s);
        EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
      }
    }
  });
  EXPECT_EQ(r, 37u);
  EXPECT_FALSE(serial == simulate_forward(drift, init, g, 8, 37, 100));
}

TEST(SimulateForward, CommonNoiseAcrossParticleCounts) {
  const TimeGrid g(1.0, 10);
  const auto init = InitialLaw::gaussian_scalar(0, 1);
  const auto a = simulate_forward(DriftSpec::zero(1), init, g, 2, 3, 5);
  const auto b = simulate_forward(DriftSpec::zero(1), init, g, 5, 3, 5);
  for (std::size_t s = 0; s < a.slots(); ++s) {
    EXPECT_EQ(a.value(2, s, 1, 0), b.value(2, s, 1, 0));
  }
}

TEST(SimulateForward, BlowUpNamesReplicaAndNode) {
  const TimeGrid g(1.0, 100);
  const auto explode = DriftSpec::pairwise(PairKernel::linear(0.0), Confinement::linear(-200.0), 1);
  try {
    SimulationOptions opt;
    opt.threads = 3;
    simulate_forward(explode, InitialLaw::gaussian_scalar(1.0, 0.01), g, 1, 6, 1, opt);
    FAIL() << "expected blow-up";
  } catch (const SimulationBlowUp& e) {
    EXPECT_EQ(e.replica(), 0u);
    EXPECT_GT(e.node(), 0u);
    EXPECT_LE(e.node(), 100u);
  }
}

TEST(SimulateForward, RejectsBadArguments) {
  const TimeGrid g(1.0, 10);
  EXPECT_THROW(simulate_forward(DriftSpec::zero(1), InitialLaw::point_mass({0}), g, 0, 1, 1), InputError);
  EXPECT_THROW(simulate_forward(DriftSpec::zero(2), InitialLaw::point_mass({0}), g, 1, 1, 1), ConfigError);
}

TEST(ReversePaths, InvolutionAndReflection) {
  const TimeGrid g(1.0, 10);
  const auto p = simulate_forward(DriftSpec::zero(1), InitialLaw::gaussian_scalar(0, 1), g, 3, 4, 8);
  const auto rr = reverse_paths(reverse_paths(p));
  EXPECT_TRUE(rr == p);
  EXPECT_TRUE(reverse_paths(p).reversed());

  PathEnsemble line(1, 1, 1, g, 0, "t", PathEnsemble::all_nodes(g));
  PathEnsemble flat(1, 1, 1, g, 0, "a", PathEnsemble::all_nodes(g));
  for (std::size_t k = 0; k <= 10; ++k) {
    line.state(0, k)[0] = g.time(k);
    flat.state(0, k)[0] = 3.0;
  }
  const auto rl = reverse_paths(line);
  for (std::size_t k = 0; k <= 10; ++k) EXPECT_NEAR(rl.value(0, k, 0, 0), 1.0 - g.time(k), 1e-15);
  const auto rf = reverse_paths(flat);
  for (std::size_t k = 0; k <= 10; ++k) EXPECT_EQ(rf.value(0, k, 0, 0), 3.0);
}

TEST(ReversePaths, SubsetOfNodes) {
  const TimeGrid g(1.0, 10);
  SimulationOptions opt{0, {0, 3, 10}, 1, 1e6};
  const auto p = simulate_forward(DriftSpec::zero(1), InitialLaw::gaussian_scalar(0, 1), g, 2, 2, 8, opt);
  const auto r = reverse_paths(p);
  EXPECT_EQ(r.nodes(), (std::vector<std::size_t>{0, 7, 10}));
  EXPECT_EQ(r.value(1, *r.slot_of(7), 1, 0), p.value(1, *p.slot_of(3), 1, 0));
}

TEST(DriftRegression, ZeroAndConstantDrift) {
  const TimeGrid g(1.0, 100);
  const auto bins = Bins::line(-3, 3, 12);
  for (double c : {0.0, 1.3}) {
    const auto p = simulate_forward(DriftSpec::constant({c}), InitialLaw::gaussian_scalar(0, 1), g, 1, 20000, 21);
    const auto est = estimate_drift_from_paths(p, 50, bins);
    EXPECT_GT(est.reliable_count(), 4u);
    for (const auto& s : est.stats) {
      if (!s.reliable) continue;
      EXPECT_LE(std::abs(s.value[0] - c), 4.0 * std::sqrt(1.0 / (g.dt() * s.count)));
    }
  }
}

TEST(DriftRegression, StationaryOrnsteinUhlenbeck) {
  const TimeGrid g(1.0, 100);
  const auto p = simulate_forward(DriftSpec::linear_scalar(-1.0), InitialLaw::gaussian_scalar(0, 0.5), g, 1, 40000, 22);
  const auto est = estimate_drift_from_paths(p, 50, Bins::line(-1.5, 1.5, 6), 10);
  for (const auto& s : est.stats) {
    ASSERT_TRUE(s.reliable);
    EXPECT_NEAR(s.value[0], -s.location[0], 4.0 * s.stderr_[0] + 0.02);
  }
}

TEST(DriftRegression, BackwardDriftOracles) {
  const TimeGrid g(1.0, 100);
  const std::size_t R = 40000;
  const auto bins = Bins::line(-1.5, 1.5, 6);
  const std::size_t node = 40;
  const double s = g.time(node), tau = g.horizon() - s;

  const auto bm = simulate_forward(DriftSpec::zero(1), InitialLaw::gaussian_scalar(0, 1), g, 1, R, 23);
  for (const auto& st : estimate_backward_drift(bm, node, bins, 10).stats) {
    EXPECT_NEAR(st.value[0], -st.location[0] / (1.0 + tau), 4.0 * st.stderr_[0] + 0.03);
  }

  const auto ou = simulate_forward(DriftSpec::linear_scalar(-1.0), InitialLaw::gaussian_scalar(0, 0.5), g, 1, R, 24);
  for (const auto& st : estimate_backward_drift(ou, node, bins, 10).stats) {
    EXPECT_NEAR(st.value[0], -st.location[0], 4.0 * st.stderr_[0] + 0.03);
  }

  const double c = 0.8;
  const auto cd = simulate_forward(DriftSpec::constant({c}), InitialLaw::gaussian_scalar(0, 1), g, 1, R, 25);
  for (const auto& st : estimate_backward_drift(cd, node, Bins::line(-1.0, 2.0, 6), 10).stats) {
    const double x = st.location[0];
    EXPECT_NEAR(st.value[0], -c + (c * tau - x) / (1.0 + tau), 4.0 * st.stderr_[0] + 0.03);
  }
}

TEST(DriftRegression, EmptyEnsembleAndUnreliableBins) {
  PathEnsemble empty;
  EXPECT_THROW(estimate_drift_from_paths(empty, 0, Bins::line(-1, 1, 2)), InputError);
  const TimeGrid g(1.0, 10);
  const auto p = simulate_forward(DriftSpec::zero(1), InitialLaw::gaussian_scalar(0, 1), g, 1, 60, 2);
  const auto est = estimate_drift_from_paths(p, 0, Bins::line(-4, 4, 8, 50));
  EXPECT_EQ(est.reliable_count(), 0u);
}

TEST(QuadraticVariation, ConvergesToOne) {
  const TimeGrid g(1.0, 1000);
  const auto drift = DriftSpec::linear_scalar(-1.0);
  const auto p = simulate_forward(drift, InitialLaw::gaussian_scalar(0, 0.5), g, 1, 20, 31);
  double mean = 0;
  for (std::size_t r = 0; r < 20; ++r) mean += quadratic_variation(p, drift, r, 0, 0) / 20;
  EXPECT_NEAR(mean, 1.0, 0.05);
}

TEST(PathIo, RoundTrip) {
  const TimeGrid g(0.5, 7);
  const auto p = simulate_forward(DriftSpec::linear_scalar(-1.0), InitialLaw::gaussian_scalar(0, 1), g, 3, 2, 77);
  const auto file = (std::filesystem::temp_directory_path() / "chaosbench_paths.bin").string();
  path_io::write(p, file);
  const auto q = path_io::read(file);
  std::filesystem::remove(file);
  EXPECT_EQ(q.replicas(), 2u);
  EXPECT_EQ(q.grid(), g);
  EXPECT_EQ(q.seed(), 77u);
  EXPECT_TRUE(std::equal(p.values().begin(), p.values().end(), q.values().begin()));
}
