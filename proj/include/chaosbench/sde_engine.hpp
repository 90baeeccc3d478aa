#pragma once

// Euler-Maruyama simulation of N-particle systems and bin-regression
// estimators of forward and backward drifts.

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "chaosbench/error.hpp"
#include "chaosbench/models.hpp"
#include "chaosbench/path_ensemble.hpp"
#include "chaosbench/rng.hpp"

namespace chaosbench {

// Draws the initial position of particle `particle` in replica `replica`.
using InitialSampler =
    std::function<void(const ReplicaStream& stream, std::uint64_t replica, std::uint32_t particle, std::span<double> out)>;

inline InitialSampler sampler_for(const InitialLaw& law) {
  return [law](const ReplicaStream& stream, std::uint64_t, std::uint32_t particle, std::span<double> out) {
    law.sample(stream, particle, out);
  };
}

struct SimulationOptions {
  std::size_t first_replica = 0;
  std::vector<std::size_t> record_nodes;  // empty: record every node
  unsigned threads = 1;
  double blowup_cap = 1e6;
};

namespace detail {

// Runs body(r) for r in [0, count) on up to `threads` workers. Exceptions are
// collected and the one from the lowest index is rethrown, so failures are
// reported identically for any worker count.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t r = 0; r < count; ++r) body(r);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::size_t> error_at(threads, count);
  std::vector<std::thread> pool;
  const std::size_t per = (count + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t lo = w * per, hi = std::min(count, lo + per);
      for (std::size_t r = lo; r < hi; ++r) {
        try {
          body(r);
        } catch (...) {
          errors[w] = std::current_exception();
          error_at[w] = r;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  std::size_t best = threads;
  for (unsigned w = 0; w < threads; ++w) {
    if (errors[w] && (best == threads || error_at[w] < error_at[best])) best = w;
  }
  if (best != threads) std::rethrow_exception(errors[best]);
}

}  // namespace detail

// X_{k+1} = X_k + b(X_k, t_k) dt + sqrt(dt) xi_k, replica streams keyed by (seed, replica).
inline PathEnsemble simulate_forward(const DriftSpec& drift, const InitialSampler& init, std::size_t init_dim,
                                     const TimeGrid& grid, std::size_t n_particles, std::size_t replicas,
                                     std::uint64_t seed, const SimulationOptions& opt = {}) {
  if (n_particles < 1 || replicas < 1) throw InputError("simulate_forward: N and R must be at least 1");
  if (init_dim != drift.dim()) throw ConfigError("simulate_forward: initial law dimension does not match drift");
  const std::size_t d = drift.dim();
  auto nodes = opt.record_nodes.empty() ? PathEnsemble::all_nodes(grid) : opt.record_nodes;
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  PathEnsemble out(replicas, n_particles, d, grid, seed, drift.id(), nodes, opt.first_replica);

  const std::size_t n_steps = grid.n_steps();
  std::vector<std::ptrdiff_t> slot_for(n_steps + 1, -1);
  for (std::size_t s = 0; s < nodes.size(); ++s) slot_for[nodes[s]] = static_cast<std::ptrdiff_t>(s);
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  detail::parallel_for(replicas, opt.threads, [&](std::size_t local) {
    const std::uint64_t r = opt.first_replica + local;
    const ReplicaStream stream(seed, r);
    std::vector<double> x(n_particles * d), b(n_particles * d), z(d);
    for (std::size_t i = 0; i < n_particles; ++i) {
      init(stream, r, static_cast<std::uint32_t>(i), std::span<double>(x).subspan(i * d, d));
    }
    auto record = [&](std::size_t k) {
      if (slot_for[k] >= 0) {
        std::copy(x.begin(), x.end(), out.state(local, static_cast<std::size_t>(slot_for[k])).begin());
      }
    };
    record(0);
    for (std::size_t k = 0; k < n_steps; ++k) {
      evaluate_drift(drift, x, n_particles, grid.time(k), b);
      for (std::size_t i = 0; i < n_particles; ++i) {
        stream.normals(k + 1, static_cast<std::uint32_t>(i), StreamTag::kIncrement, z);
        for (std::size_t c = 0; c < d; ++c) {
          const std::size_t j = i * d + c;
          if (!std::isfinite(b[j])) throw SimulationBlowUp(r, k, "non-finite drift value");
          x[j] += b[j] * dt + sqdt * z[c];
          if (!(std::abs(x[j]) <= opt.blowup_cap)) throw SimulationBlowUp(r, k + 1, "state exceeds blow-up cap");
        }
      }
      record(k + 1);
    }
  });
  return out;
}

inline PathEnsemble simulate_forward(const DriftSpec& drift, const InitialLaw& init, const TimeGrid& grid,
                                     std::size_t n_particles, std::size_t replicas, std::uint64_t seed,
                                     const SimulationOptions& opt = {}) {
  return simulate_forward(drift, sampler_for(init), init.dim(), grid, n_particles, replicas, seed, opt);
}

// Simulates replicas [0, R) in blocks of `chunk` and hands every block to
// `visit` in replica order. Results are identical to a single simulation.
inline void simulate_in_chunks(const DriftSpec& drift, const InitialSampler& init, std::size_t init_dim,
                               const TimeGrid& grid, std::size_t n_particles, std::size_t replicas, std::uint64_t seed,
                               std::size_t chunk, SimulationOptions opt,
                               const std::function<void(const PathEnsemble&)>& visit) {
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t r0 = 0; r0 < replicas; r0 += chunk) {
    opt.first_replica = r0;
    const auto block = simulate_forward(drift, init, init_dim, grid, n_particles, std::min(chunk, replicas - r0), seed, opt);
    visit(block);
  }
}

// Equal-width bins per coordinate.
struct BinAxis {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t count = 1;

  double width() const { return (hi - lo) / static_cast<double>(count); }
  friend bool operator==(const BinAxis&, const BinAxis&) = default;
};

class Bins {
 public:
  Bins() = default;
  explicit Bins(std::vector<BinAxis> axes, std::size_t min_count = 50) : axes_(std::move(axes)), min_count_(min_count) {
    if (axes_.empty() || axes_.size() > 2) throw ConfigError("bins: 1 or 2 coordinates supported");
    for (const auto& a : axes_) {
      if (!(a.hi > a.lo) || a.count < 1) throw ConfigError("bins: need lo < hi and count >= 1");
    }
  }
  static Bins line(double lo, double hi, std::size_t count, std::size_t min_count = 50) {
    return Bins({BinAxis{lo, hi, count}}, min_count);
  }

  std::size_t dim() const { return axes_.size(); }
  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes_) n *= a.count;
    return n;
  }
  std::size_t min_count() const { return min_count_; }
  const std::vector<BinAxis>& axes() const { return axes_; }

  // Flat bin of a point; nullopt outside unless `clamp` is set.
  std::optional<std::size_t> locate(std::span<const double> x, bool clamp = false) const {
    std::size_t flat = 0;
    for (std::size_t k = 0; k < axes_.size(); ++k) {
      const auto& a = axes_[k];
      const double pos = (x[k] - a.lo) / a.width();
      std::ptrdiff_t i = static_cast<std::ptrdiff_t>(std::floor(pos));
      if (x[k] == a.hi) i = static_cast<std::ptrdiff_t>(a.count) - 1;
      if (i < 0 || i >= static_cast<std::ptrdiff_t>(a.count) || std::isnan(pos)) {
        if (!clamp || std::isnan(pos)) return std::nullopt;
        i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(a.count) - 1);
      }
      flat = flat * a.count + static_cast<std::size_t>(i);
    }
    return flat;
  }

  void bounds(std::size_t flat, std::span<double> lo, std::span<double> hi) const {
    for (std::size_t k = axes_.size(); k-- > 0;) {
      const auto& a = axes_[k];
      const std::size_t i = flat % a.count;
      flat /= a.count;
      lo[k] = a.lo + a.width() * static_cast<double>(i);
      hi[k] = lo[k] + a.width();
    }
  }

  void center(std::size_t flat, std::span<double> out) const {
    std::vector<double> lo(dim()), hi(dim());
    bounds(flat, lo, hi);
    for (std::size_t k = 0; k < dim(); ++k) out[k] = 0.5 * (lo[k] + hi[k]);
  }

  friend bool operator==(const Bins&, const Bins&) = default;

 private:
  std::vector<BinAxis> axes_;
  std::size_t min_count_ = 50;
};

struct BinStat {
  std::size_t count = 0;
  std::vector<double> location;  // mean position of the samples in the bin
  std::vector<double> value;     // mean response
  std::vector<double> stderr_;   // standard error of the mean response
  bool reliable = false;
};

// Tabulated drift estimate, one entry per bin.
struct DriftEstimate {
  Bins bins;
  std::size_t dim = 1;
  std::vector<BinStat> stats;
  std::size_t uncovered = 0;  // samples falling outside every bin

  std::size_t reliable_count() const {
    return static_cast<std::size_t>(std::count_if(stats.begin(), stats.end(), [](const BinStat& s) { return s.reliable; }));
  }
};

// Mergeable per-bin sufficient statistics for the regression y ~ E[y | x in bin].
class IncrementRegression {
 public:
  IncrementRegression(Bins bins, std::size_t dim)
      : bins_(std::move(bins)),
        dim_(dim),
        count_(bins_.size(), 0),
        sum_x_(bins_.size() * dim, 0.0),
        sum_y_(bins_.size() * dim, 0.0),
        sum_yy_(bins_.size() * dim, 0.0) {
    if (bins_.dim() != dim) throw ConfigError("regression: bin dimension does not match state dimension");
  }

  void add(std::span<const double> x, std::span<const double> y) {
    const auto b = bins_.locate(x);
    if (!b) {
      ++uncovered_;
      return;
    }
    ++count_[*b];
    for (std::size_t c = 0; c < dim_; ++c) {
      sum_x_[*b * dim_ + c] += x[c];
      sum_y_[*b * dim_ + c] += y[c];
      sum_yy_[*b * dim_ + c] += y[c] * y[c];
    }
  }

  void merge(const IncrementRegression& o) {
    if (!(o.bins_ == bins_) || o.dim_ != dim_) throw InputError("regression: cannot merge different binnings");
    for (std::size_t b = 0; b < count_.size(); ++b) count_[b] += o.count_[b];
    for (std::size_t j = 0; j < sum_x_.size(); ++j) {
      sum_x_[j] += o.sum_x_[j];
      sum_y_[j] += o.sum_y_[j];
      sum_yy_[j] += o.sum_yy_[j];
    }
    uncovered_ += o.uncovered_;
  }

  std::size_t total() const {
    std::size_t n = uncovered_;
    for (auto c : count_) n += c;
    return n;
  }

  DriftEstimate finalize() const {
    DriftEstimate est{bins_, dim_, std::vector<BinStat>(bins_.size()), uncovered_};
    for (std::size_t b = 0; b < bins_.size(); ++b) {
      BinStat& s = est.stats[b];
      s.count = count_[b];
      s.location.assign(dim_, 0.0);
      s.value.assign(dim_, 0.0);
      s.stderr_.assign(dim_, std::numeric_limits<double>::infinity());
      if (s.count == 0) {
        bins_.center(b, s.location);
        continue;
      }
      const double n = static_cast<double>(s.count);
      for (std::size_t c = 0; c < dim_; ++c) {
        s.location[c] = sum_x_[b * dim_ + c] / n;
        s.value[c] = sum_y_[b * dim_ + c] / n;
        if (s.count > 1) {
          const double var = std::max(0.0, (sum_yy_[b * dim_ + c] - n * s.value[c] * s.value[c]) / (n - 1.0));
          s.stderr_[c] = std::sqrt(var / n);
        }
      }
      s.reliable = s.count >= bins_.min_count();
    }
    return est;
  }

 private:
  Bins bins_;
  std::size_t dim_;
  std::vector<std::size_t> count_;
  std::vector<double> sum_x_, sum_y_, sum_yy_;
  std::size_t uncovered_ = 0;
};

// Adds the increment pairs (X_k, (X_{k+1} - X_k)/dt) for k in
// [node - window, node + window], pooling replicas and particles.
inline void accumulate_increments(const PathEnsemble& paths, std::size_t node, std::size_t window,
                                  IncrementRegression& reg) {
  const std::size_t n_steps = paths.grid().n_steps();
  if (node >= n_steps) throw InputError("drift estimate: node must be below n_steps");
  const double inv_dt = 1.0 / paths.grid().dt();
  const std::size_t lo = node >= window ? node - window : 0;
  const std::size_t hi = std::min(node + window, n_steps - 1);
  const std::size_t d = paths.dim();
  std::vector<double> y(d);
  for (std::size_t k = lo; k <= hi; ++k) {
    const std::size_t s0 = paths.require_slot(k);
    const std::size_t s1 = paths.require_slot(k + 1);
    for (std::size_t r = 0; r < paths.replicas(); ++r) {
      auto a = paths.state(r, s0);
      auto b = paths.state(r, s1);
      for (std::size_t i = 0; i < paths.particles(); ++i) {
        for (std::size_t c = 0; c < d; ++c) y[c] = (b[i * d + c] - a[i * d + c]) * inv_dt;
        reg.add(a.subspan(i * d, d), y);
      }
    }
  }
}

// Forward drift as the conditional mean increment per bin. `window` pools
// neighbouring time nodes (0: the single node).
inline DriftEstimate estimate_drift_from_paths(const PathEnsemble& paths, std::size_t node, const Bins& bins,
                                               std::size_t window = 0) {
  if (paths.empty()) throw InputError("drift estimate: empty ensemble");
  IncrementRegression reg(bins, paths.dim());
  accumulate_increments(paths, node, window, reg);
  return reg.finalize();
}

// Backward drift: the forward regression applied to the reversed paths, at
// reversed-time node `node`.
inline DriftEstimate estimate_backward_drift(const PathEnsemble& paths, std::size_t node, const Bins& bins,
                                             std::size_t window = 0) {
  if (paths.empty()) throw InputError("drift estimate: empty ensemble");
  return estimate_drift_from_paths(reverse_paths(paths), node, bins, window);
}

// sum_k (dX_k - b(X_k) dt)^2 / T for one replica, particle and coordinate.
inline double quadratic_variation(const PathEnsemble& paths, const DriftSpec& drift, std::size_t replica,
                                  std::size_t particle, std::size_t coord) {
  if (!paths.has_all_nodes()) throw InputError("quadratic variation needs every time node");
  const auto& g = paths.grid();
  const std::size_t N = paths.particles(), d = paths.dim();
  std::vector<double> b(N * d);
  double acc = 0.0;
  for (std::size_t k = 0; k < g.n_steps(); ++k) {
    auto x = paths.state(replica, k);
    evaluate_drift(drift, x, N, g.time(k), b);
    const double inc = paths.value(replica, k + 1, particle, coord) - x[particle * d + coord] - b[particle * d + coord] * g.dt();
    acc += inc * inc;
  }
  return acc / g.horizon();
}

}  // namespace chaosbench
