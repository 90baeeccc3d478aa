#pragma once

// Time-reversal checks: the duality b~(x, T-t) + b(x, t) = grad log rho(x, t)
// and the agreement of marginals of a re-simulated reversed process.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "chaosbench/csv.hpp"
#include "chaosbench/density.hpp"
#include "chaosbench/entropy.hpp"
#include "chaosbench/error.hpp"
#include "chaosbench/models.hpp"
#include "chaosbench/path_ensemble.hpp"
#include "chaosbench/rng.hpp"
#include "chaosbench/sde_engine.hpp"

namespace chaosbench {

struct DualityOptions {
  Bins bins = Bins::line(-2.0, 2.0, 4);
  std::size_t window = 200;  // time nodes pooled on each side of a check time
  SpatialGrid density_grid = SpatialGrid::line(-8.0, 8.0, 801);
  double bandwidth = 0.1;
  double bulk_fraction = 0.01;  // bulk = {rho >= bulk_fraction * max rho}
};

struct DualityRow {
  double t = 0.0;
  std::size_t bin = 0;
  double x = 0.0;  // mean sample position in the bin
  std::size_t count = 0;
  double b_forward = 0.0;
  double b_backward = 0.0;
  double score = 0.0;
  double residual = 0.0;
  double stderr_ = 0.0;  // of the backward increment mean, the dominant noise
  bool reliable = false;
};

struct DualityTime {
  double t = 0.0;
  double sup = 0.0;
  double l2 = 0.0;
  std::size_t reliable_bins = 0;
};

// Residual r = b_back(x, T - t) + b(x, t) - grad log rho(x, t), averaged over
// each bin; norms are taken over bins that are reliable and inside the bulk.
struct DualityReport {
  TimeGrid grid;
  Bins bins;
  std::vector<DualityRow> rows;
  std::vector<DualityTime> per_time;
  double sup = 0.0;
  double l2 = 0.0;
  std::string bulk = "rho >= 0.01 max rho";

  CsvTable csv(const std::string& provenance = {}) const {
    CsvTable t({"t", "x", "b_forward", "b_backward_est", "score_est", "residual", "reliable"}, provenance);
    for (const auto& r : rows) {
      t.row({fmt_num(r.t), fmt_num(r.x), fmt_num(r.b_forward), fmt_num(r.b_backward), fmt_num(r.score),
             fmt_num(r.residual), r.reliable ? "1" : "0"});
    }
    return t;
  }
};

namespace detail {

// int_lo^hi f over a 1-d grid field by midpoint sampling of the linear interpolant.
inline double integrate_interval(const SpatialGrid& g, const std::vector<double>& f, double lo, double hi,
                                 std::size_t samples = 400) {
  const double w = (hi - lo) / static_cast<double>(samples);
  double s = 0.0;
  std::vector<double> x(1);
  for (std::size_t i = 0; i < samples; ++i) {
    x[0] = lo + (static_cast<double>(i) + 0.5) * w;
    const auto st = g.stencil(x, true);
    for (std::size_t k = 0; k < st.count; ++k) s += w * st.weight[k] * f[st.index[k]];
  }
  return s;
}

inline double interpolate(const SpatialGrid& g, const std::vector<double>& f, std::span<const double> x) {
  const auto st = g.stencil(x, true);
  double s = 0.0;
  for (std::size_t k = 0; k < st.count; ++k) s += st.weight[k] * f[st.index[k]];
  return s;
}

}  // namespace detail

// Pools, for each check node k, the reversed increments (X_{j-1} - X_j)/dt
// and the drift b(X_j, t_j) against X_j over j in [k - window, k + window],
// together with a density estimate of the same samples.
class DualityAccumulator {
 public:
  DualityAccumulator(DriftSpec drift, TimeGrid grid, std::vector<std::size_t> nodes, DualityOptions opt = {})
      : drift_(std::move(drift)), grid_(grid), nodes_(std::move(nodes)), opt_(std::move(opt)) {
    if (opt_.bins.dim() != 1 || drift_.dim() != 1) throw ConfigError("duality: one spatial dimension supported");
    for (std::size_t k : nodes_) {
      if (k == 0 || k >= grid_.n_steps()) throw InputError("duality: check times must be interior to (0, T)");
      backward_.emplace_back(opt_.bins, 1);
      forward_.emplace_back(opt_.bins, 1);
      density_.emplace_back(opt_.density_grid, opt_.bandwidth);
    }
  }

  std::pair<std::size_t, std::size_t> window(std::size_t k) const {
    return {std::max<std::size_t>(1, k > opt_.window ? k - opt_.window : 1), std::min(grid_.n_steps(), k + opt_.window)};
  }

  void add(const PathEnsemble& paths) {
    if (paths.drift_id() != drift_.id()) throw MisuseError("duality: paths were not simulated under this drift");
    if (!(paths.grid() == grid_)) throw InputError("duality: time grid mismatch");
    const std::size_t N = paths.particles();
    std::vector<double> b(N), x(1), y(1);
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const auto [lo, hi] = window(nodes_[q]);
      for (std::size_t j = lo; j <= hi; ++j) {
        const std::size_t s1 = paths.require_slot(j), s0 = paths.require_slot(j - 1);
        for (std::size_t r = 0; r < paths.replicas(); ++r) {
          const auto xj = paths.state(r, s1);
          const auto xm = paths.state(r, s0);
          evaluate_drift(drift_, xj, N, grid_.time(j), b);
          for (std::size_t i = 0; i < N; ++i) {
            x[0] = xj[i];
            y[0] = (xm[i] - xj[i]) / grid_.dt();
            backward_[q].add(x, y);
            y[0] = b[i];
            forward_[q].add(x, y);
            density_[q].add(x);
          }
        }
      }
    }
  }

  DualityReport finalize() const {
    DualityReport rep{grid_, opt_.bins, {}, {}, 0.0, 0.0, {}};
    rep.bulk = "rho >= " + fmt_num(opt_.bulk_fraction) + " max rho";
    double l2_num = 0.0, l2_den = 0.0;
    std::size_t reliable_total = 0;
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const double t = grid_.time(nodes_[q]);
      const auto back = backward_[q].finalize();
      const auto fwd = forward_[q].finalize();
      const auto dens = density_[q].finalize();
      const auto score = score_field(dens);
      std::vector<double> flux(dens.values.size());
      for (std::size_t j = 0; j < flux.size(); ++j) flux[j] = score.values[j] * dens.values[j];
      const double peak = dens.max();
      DualityTime pt{t, 0.0, 0.0, 0};
      double num = 0.0, den = 0.0;
      for (std::size_t b = 0; b < opt_.bins.size(); ++b) {
        std::vector<double> lo(1), hi(1);
        opt_.bins.bounds(b, lo, hi);
        DualityRow row;
        row.t = t;
        row.bin = b;
        row.x = back.stats[b].location[0];
        row.count = back.stats[b].count;
        row.b_backward = back.stats[b].value[0];
        row.b_forward = fwd.stats[b].value[0];
        const double mass = detail::integrate_interval(dens.grid, dens.values, lo[0], hi[0]);
        row.score = mass > 0.0 ? detail::integrate_interval(dens.grid, flux, lo[0], hi[0]) / mass : 0.0;
        row.residual = row.b_backward + row.b_forward - row.score;
        row.stderr_ = back.stats[b].stderr_[0];
        const double rho_at = detail::interpolate(dens.grid, dens.values, std::span<const double>(&row.x, 1));
        row.reliable = back.stats[b].reliable && rho_at >= dens.floor && rho_at >= opt_.bulk_fraction * peak;
        if (row.reliable) {
          ++pt.reliable_bins;
          pt.sup = std::max(pt.sup, std::abs(row.residual));
          num += mass * row.residual * row.residual;
          den += mass;
        }
        rep.rows.push_back(row);
      }
      pt.l2 = den > 0.0 ? std::sqrt(num / den) : 0.0;
      l2_num += num;
      l2_den += den;
      reliable_total += pt.reliable_bins;
      rep.sup = std::max(rep.sup, pt.sup);
      rep.per_time.push_back(pt);
    }
    if (reliable_total == 0) throw EstimationFailure("duality: no reliable bins in the bulk");
    rep.l2 = std::sqrt(l2_num / l2_den);
    return rep;
  }

 private:
  DriftSpec drift_;
  TimeGrid grid_;
  std::vector<std::size_t> nodes_;
  DualityOptions opt_;
  std::vector<IncrementRegression> backward_, forward_;
  std::vector<DensityAccumulator> density_;
};

inline DualityReport duality_residual(const PathEnsemble& paths, const DriftSpec& drift,
                                      const std::vector<std::size_t>& nodes, const DualityOptions& opt = {}) {
  if (paths.empty()) throw InputError("duality: empty ensemble");
  DualityAccumulator acc(drift, paths.grid(), nodes, opt);
  acc.add(paths);
  return acc.finalize();
}

struct ReversalOptions {
  SpatialGrid density_grid = SpatialGrid::line(-8.0, 8.0, 801);
  double bandwidth = 0.1;
  std::size_t tab_stride = 10;         // forward densities every tab_stride nodes
  std::size_t replicas = 20000;        // size of the reversed ensemble
  double reliable_fraction = 1e-3;     // tabulate b~ where rho >= fraction * max
  double min_coverage = 0.99;          // mass that must sit on reliable nodes
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

struct ReversalCheck {
  std::vector<double> times;  // reversed times s
  std::vector<double> tv;     // TV(rho_rev(s), rho_fwd(T - s))
  std::vector<CklpRecord> pairs;
  double min_coverage = 1.0;
};

// Collects forward densities on the tabulation nodes plus a pool of terminal
// samples from which the reversed process is started.
class ReversalAccumulator {
 public:
  ReversalAccumulator(DriftSpec drift, TimeGrid grid, std::vector<std::size_t> check_nodes, ReversalOptions opt = {})
      : drift_(std::move(drift)), grid_(grid), checks_(std::move(check_nodes)), opt_(std::move(opt)) {
    if (!drift_.is_single_particle()) throw MisuseError("reversal: the reversed drift needs a single-particle field");
    if (drift_.dim() != 1 || opt_.density_grid.dim() != 1) throw ConfigError("reversal: one spatial dimension supported");
    const std::size_t n = grid_.n_steps();
    for (std::size_t k = 0; k <= n; k += std::max<std::size_t>(opt_.tab_stride, 1)) tab_.push_back(k);
    if (tab_.back() != n) tab_.push_back(n);
    for (std::size_t s : checks_) {
      if (s == 0 || s >= n) throw InputError("reversal: check times must be interior to (0, T)");
      compare_.push_back(n - s);
    }
    nodes_ = tab_;
    nodes_.insert(nodes_.end(), compare_.begin(), compare_.end());
    std::sort(nodes_.begin(), nodes_.end());
    nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
    for (std::size_t i = 0; i < nodes_.size(); ++i) density_.emplace_back(opt_.density_grid, opt_.bandwidth);
  }

  const std::vector<std::size_t>& nodes() const { return nodes_; }

  void add(const PathEnsemble& paths) {
    if (paths.drift_id() != drift_.id()) throw MisuseError("reversal: paths were not simulated under this drift");
    for (std::size_t i = 0; i < nodes_.size(); ++i) density_[i].add_node(paths, nodes_[i]);
    const std::size_t slot = paths.require_slot(grid_.n_steps());
    for (std::size_t r = 0; r < paths.replicas() && terminal_.size() < opt_.replicas; ++r) {
      for (double v : paths.state(r, slot)) {
        if (terminal_.size() < opt_.replicas) terminal_.push_back(v);
      }
    }
  }

  ReversalCheck finalize() const {
    const std::size_t n = grid_.n_steps();
    std::vector<DensityEstimate> fwd;
    for (const auto& d : density_) fwd.push_back(d.finalize());
    auto dens_at = [&](std::size_t node) -> const DensityEstimate& {
      return fwd[static_cast<std::size_t>(std::lower_bound(nodes_.begin(), nodes_.end(), node) - nodes_.begin())];
    };

    // b~(x, s) = -b(x, T - s) + score(x, T - s) on reversed times s = T - t_k
    const SpatialGrid& g = opt_.density_grid;
    TabulatedDrift tab{g, {}, {}, true};
    ReversalCheck out;
    for (auto it = tab_.rbegin(); it != tab_.rend(); ++it) {
      const std::size_t k = *it;
      const DensityEstimate& d = dens_at(k);
      const auto score = score_field(d);
      const auto b = drift_field(drift_, g, grid_.time(k));
      const double cut = opt_.reliable_fraction * d.max();
      std::vector<unsigned char> ok(g.size());
      double covered = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        ok[j] = d.values[j] >= cut && score.reliable[j];
        if (ok[j]) covered += g.weight(j) * d.values[j];
      }
      out.min_coverage = std::min(out.min_coverage, covered);
      if (covered < opt_.min_coverage) {
        throw CoverageFailure("reversal: reliable reversed drift covers only " + fmt_num(covered) + " of the mass at t = " +
                              fmt_num(grid_.time(k)));
      }
      const std::size_t first = static_cast<std::size_t>(std::find(ok.begin(), ok.end(), 1) - ok.begin());
      const std::size_t last = g.size() - 1 - static_cast<std::size_t>(std::find(ok.rbegin(), ok.rend(), 1) - ok.rbegin());
      tab.times.push_back(grid_.horizon() - grid_.time(k));
      for (std::size_t j = 0; j < g.size(); ++j) {
        const std::size_t src = std::clamp(j, first, last);
        tab.values.push_back(-b.values[src] + score.values[src]);
      }
    }
    tab.times.front() = 0.0;
    const DriftSpec reversed = DriftSpec::tabulated(std::move(tab), 1);

    if (terminal_.empty()) throw InputError("reversal: no terminal samples");
    const double bw = dens_at(n).bandwidth;
    const auto pool = terminal_;
    const InitialSampler start = [pool, bw](const ReplicaStream& stream, std::uint64_t replica, std::uint32_t particle,
                                            std::span<double> x) {
      double z[1];
      stream.normals(0, particle, StreamTag::kResample, z);
      x[0] = pool[replica % pool.size()] + bw * z[0];
    };
    SimulationOptions sim;
    sim.threads = opt_.threads;
    sim.record_nodes = checks_;
    const auto rev = simulate_forward(reversed, start, 1, grid_, 1, opt_.replicas, derive_seed(opt_.seed, hash_name("reversal")), sim);
    for (std::size_t i = 0; i < checks_.size(); ++i) {
      const auto dr = estimate_density_at(rev, checks_[i], g, opt_.bandwidth);
      const auto& df = dens_at(compare_[i]);
      out.times.push_back(grid_.time(checks_[i]));
      out.tv.push_back(tv_distance(dr, df));
      out.pairs.push_back(cklp_check(dr, df, 0.01, "reversed s=" + fmt_num(grid_.time(checks_[i]))));
    }
    return out;
  }

 private:
  DriftSpec drift_;
  TimeGrid grid_;
  std::vector<std::size_t> checks_, compare_, tab_, nodes_;
  ReversalOptions opt_;
  std::vector<DensityAccumulator> density_;
  std::vector<double> terminal_;
};

// check_nodes are reversed-time nodes s; the reversed marginal at s is
// compared with the forward marginal at T - s.
inline ReversalCheck reversed_marginal_check(const PathEnsemble& paths, const DriftSpec& drift,
                                             const std::vector<std::size_t>& check_nodes, ReversalOptions opt = {}) {
  if (paths.empty()) throw InputError("reversal: empty ensemble");
  ReversalAccumulator acc(drift, paths.grid(), check_nodes, std::move(opt));
  acc.add(paths);
  return acc.finalize();
}

}  // namespace chaosbench
