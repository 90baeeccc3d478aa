#pragma once

// Propagation-of-chaos diagnostics on path space: per-particle Girsanov
// entropies against the Wiener measure and against the limit product law,
// bounded-Lipschitz marginal distances, projected-drift monotonicity and the
// entropy liminf check.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "chaosbench/csv.hpp"
#include "chaosbench/density.hpp"
#include "chaosbench/entropy.hpp"
#include "chaosbench/error.hpp"
#include "chaosbench/models.hpp"
#include "chaosbench/path_ensemble.hpp"
#include "chaosbench/sde_engine.hpp"

namespace chaosbench {

// First k particles of every replica. The result remembers the source N.
inline PathEnsemble marginal_paths(const PathEnsemble& paths, std::size_t k) {
  if (k > paths.particles()) {
    throw InputError("marginal paths: k = " + std::to_string(k) + " exceeds N = " + std::to_string(paths.particles()));
  }
  if (k == 0) throw InputError("marginal paths: k must be positive");
  if (k == paths.particles()) return paths;
  PathEnsemble out(paths.replicas(), k, paths.dim(), paths.grid(), paths.seed(), paths.drift_id(), paths.nodes(),
                   paths.first_replica());
  out.set_reversed(paths.reversed());
  out.set_marginal_source(paths.marginal_source() ? paths.marginal_source() : paths.particles());
  const std::size_t w = k * paths.dim();
  for (std::size_t r = 0; r < paths.replicas(); ++r) {
    for (std::size_t s = 0; s < paths.slots(); ++s) {
      auto src = paths.state(r, s);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(w), out.state(r, s).begin());
    }
  }
  return out;
}

// Permutation check on a fixed configuration: b(pi x) = pi b(x).
inline bool is_exchangeable(const DriftSpec& drift, std::size_t N, double t = 0.0) {
  if (N < 2) return true;
  const std::size_t d = drift.dim();
  std::vector<double> x(N * d), y(N * d);
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::sin(1.7 * static_cast<double>(j) + 0.3);
  // swap particles 0 and N-1
  y = x;
  for (std::size_t c = 0; c < d; ++c) std::swap(y[c], y[(N - 1) * d + c]);
  const auto bx = evaluate_drift(drift, x, N, t);
  const auto by = evaluate_drift(drift, y, N, t);
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t src = i == 0 ? N - 1 : (i == N - 1 ? 0 : i);
    for (std::size_t c = 0; c < d; ++c) {
      if (std::abs(by[i * d + c] - bx[src * d + c]) > 1e-12 * (1.0 + std::abs(bx[src * d + c]))) return false;
    }
  }
  return true;
}

// (theta, confinement) when the drift is the linear mean-field model.
inline std::optional<std::pair<double, double>> linear_mean_field_params(const DriftSpec& drift) {
  const auto* p = std::get_if<PairwiseMeanField>(&drift.payload());
  if (!p || p->grad_kernel.kind() != PairKernel::Kind::kLinear || p->confinement.kind() != Confinement::Kind::kLinear) {
    return std::nullopt;
  }
  return std::make_pair(-p->grad_kernel.coefficient(), p->confinement.coefficient());
}

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double stderr_ = std::numeric_limits<double>::quiet_NaN();
  double ci_half = std::numeric_limits<double>::quiet_NaN();  // 95% Student-t half-width
};

// Least squares of log y on log x.
inline SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("slope fit: need at least two matching points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(y[i])) {
      throw EstimationFailure("slope fit: log-log fit needs positive finite values");
    }
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx += lx[i], my += ly[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) sxx += (lx[i] - mx) * (lx[i] - mx), sxy += (lx[i] - mx) * (ly[i] - my);
  if (!(sxx > 0.0)) throw EstimationFailure("slope fit: x values are all equal");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = ly[i] - f.intercept - f.slope * lx[i];
      ssr += e * e;
    }
    f.stderr_ = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(n - 2));
    f.ci_half = boost::math::quantile(boost::math::complement(dist, 0.025)) * f.stderr_;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Bounded-Lipschitz dictionary

// Twelve test functions on k scalar coordinates, each with sup norm and
// Lipschitz constant at most 1: six averages (1/k) sum g(z_i) and six
// products k^{-1/2} prod h(z_i).
struct KacDictionary {
  static constexpr const char* kVersion = "bl-dict-v1";
  static constexpr std::size_t kMean = 6;
  static constexpr std::size_t kProduct = 6;
  static constexpr std::size_t kSize = kMean + kProduct;

  static double g(std::size_t j, double z) {
    switch (j) {
      case 0: return std::clamp(z, -1.0, 1.0);
      case 1: return std::tanh(z);
      case 2: return std::sin(z);
      case 3: return std::cos(z);
      case 4: return std::exp(-0.5 * z * z);
      default: return 0.5 * std::cos(2.0 * z);
    }
  }
  static double h(std::size_t j, double z) {
    switch (j) {
      case 0: return std::tanh(z);
      case 1: return std::sin(z);
      case 2: return std::cos(z);
      case 3: return std::exp(-0.5 * z * z);
      case 4: return 1.0 / std::cosh(z);
      default: return std::tanh(z - 0.5);
    }
  }
  static std::string name(std::size_t j) {
    static const char* names[kSize] = {"mean:clip", "mean:tanh",  "mean:sin",  "mean:cos",   "mean:gauss",  "mean:cos2",
                                       "prod:tanh", "prod:sin",   "prod:cos",  "prod:gauss", "prod:sech",   "prod:tanh-shift"};
    return names[j];
  }
};

// Block sums of the dictionary over disjoint k-tuples of particles of an
// N-particle run (first coordinate of each particle), per requested node.
class KacBlockAccumulator {
 public:
  KacBlockAccumulator(std::size_t k, std::vector<std::size_t> nodes) : k_(k), nodes_(std::move(nodes)) {
    if (k_ < 1 || k_ > 3) throw InputError("kac metric: k must be 1, 2 or 3");
    sums_.assign(nodes_.size(), {});
    counts_.assign(nodes_.size(), 0);
  }

  void add(const PathEnsemble& paths) {
    if (k_ > paths.particles()) throw InputError("kac metric: k exceeds the particle count");
    const std::size_t blocks = paths.particles() / k_;
    const double inv_k = 1.0 / static_cast<double>(k_), inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k_));
    const std::size_t d = paths.dim();
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const std::size_t slot = paths.require_slot(nodes_[q]);
      for (std::size_t r = 0; r < paths.replicas(); ++r) {
        const auto x = paths.state(r, slot);
        for (std::size_t b = 0; b < blocks; ++b) {
          for (std::size_t j = 0; j < KacDictionary::kMean; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < k_; ++i) s += KacDictionary::g(j, x[(b * k_ + i) * d]);
            sums_[q][j] += s * inv_k;
          }
          for (std::size_t j = 0; j < KacDictionary::kProduct; ++j) {
            double p = inv_sqrt_k;
            for (std::size_t i = 0; i < k_; ++i) p *= KacDictionary::h(j, x[(b * k_ + i) * d]);
            sums_[q][KacDictionary::kMean + j] += p;
          }
        }
        counts_[q] += blocks;
      }
    }
  }

  std::size_t k() const { return k_; }
  const std::vector<std::size_t>& nodes() const { return nodes_; }
  double mean(std::size_t q, std::size_t j) const { return sums_[q][j] / static_cast<double>(counts_[q]); }
  std::size_t count(std::size_t q) const { return counts_[q]; }

 private:
  std::size_t k_;
  std::vector<std::size_t> nodes_;
  std::vector<std::array<double, KacDictionary::kSize>> sums_;
  std::vector<std::size_t> counts_;
};

// One-particle moments E g_j and E h_j of the limit law, pooled over all
// particles of the limit run.
class KacLimitAccumulator {
 public:
  explicit KacLimitAccumulator(std::vector<std::size_t> nodes) : nodes_(std::move(nodes)) {
    g_.assign(nodes_.size(), {});
    h_.assign(nodes_.size(), {});
    counts_.assign(nodes_.size(), 0);
  }

  void add(const PathEnsemble& paths) {
    const std::size_t d = paths.dim();
    for (std::size_t q = 0; q < nodes_.size(); ++q) {
      const std::size_t slot = paths.require_slot(nodes_[q]);
      for (std::size_t r = 0; r < paths.replicas(); ++r) {
        const auto x = paths.state(r, slot);
        for (std::size_t i = 0; i < paths.particles(); ++i) {
          for (std::size_t j = 0; j < KacDictionary::kMean; ++j) g_[q][j] += KacDictionary::g(j, x[i * d]);
          for (std::size_t j = 0; j < KacDictionary::kProduct; ++j) h_[q][j] += KacDictionary::h(j, x[i * d]);
        }
      }
      counts_[q] += paths.replicas() * paths.particles();
    }
  }

  // E_{P^{(x)k}} of dictionary entry j.
  double product_expectation(std::size_t q, std::size_t j, std::size_t k) const {
    const double n = static_cast<double>(counts_[q]);
    if (j < KacDictionary::kMean) return g_[q][j] / n;
    return std::pow(h_[q][j - KacDictionary::kMean] / n, static_cast<double>(k)) / std::sqrt(static_cast<double>(k));
  }

  const std::vector<std::size_t>& nodes() const { return nodes_; }

 private:
  std::vector<std::size_t> nodes_;
  std::vector<std::array<double, KacDictionary::kMean>> g_;
  std::vector<std::array<double, KacDictionary::kProduct>> h_;
  std::vector<std::size_t> counts_;
};

struct KacDistance {
  double t = 0.0;
  double distance = 0.0;  // max over the dictionary
  std::string argmax;
};

inline std::vector<KacDistance> kac_distances(const KacBlockAccumulator& run, const KacLimitAccumulator& lim,
                                              const TimeGrid& grid) {
  if (run.nodes() != lim.nodes()) throw InputError("kac metric: node sets differ");
  std::vector<KacDistance> out;
  for (std::size_t q = 0; q < run.nodes().size(); ++q) {
    KacDistance d{grid.time(run.nodes()[q]), 0.0, {}};
    for (std::size_t j = 0; j < KacDictionary::kSize; ++j) {
      const double e = std::abs(run.mean(q, j) - lim.product_expectation(q, j, run.k()));
      if (e > d.distance || d.argmax.empty()) {
        d.distance = e;
        d.argmax = KacDictionary::name(j);
      }
    }
    out.push_back(d);
  }
  return out;
}

inline std::vector<KacDistance> kac_chaos_metric(const PathEnsemble& run_N, const PathEnsemble& limit_run, std::size_t k,
                                                 const std::vector<std::size_t>& nodes) {
  KacBlockAccumulator a(k, nodes);
  a.add(run_N);
  KacLimitAccumulator b(nodes);
  b.add(limit_run);
  return kac_distances(a, b, run_N.grid());
}

// ---------------------------------------------------------------------------
// Stochastic-integral functional

struct TestField {
  std::function<void(std::span<const double> x, double t, std::span<double> out)> value;
  double bound = 1.0;  // declared sup of |K|
  std::string name;
};

// (1/R) sum_r sum_k K(X_k, t_k) . (X_{k+1} - X_k) on particle 0.
inline EntropyValue drift_weak_convergence_functional(const PathEnsemble& paths, const TestField& K) {
  if (paths.empty()) throw InputError("weak functional: empty ensemble");
  const auto& g = paths.grid();
  const std::size_t d = paths.dim();
  std::vector<double> k(d);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t r = 0; r < paths.replicas(); ++r) {
    double acc = 0.0;
    for (std::size_t n = 0; n < g.n_steps(); ++n) {
      const auto x0 = paths.state(r, paths.require_slot(n)).first(d);
      const auto x1 = paths.state(r, paths.require_slot(n + 1)).first(d);
      K.value(x0, g.time(n), k);
      double norm2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        norm2 += k[c] * k[c];
        acc += k[c] * (x1[c] - x0[c]);
      }
      if (std::sqrt(norm2) > K.bound * (1.0 + 1e-12)) {
        throw InputError("weak functional: test field '" + K.name + "' exceeds its declared bound");
      }
    }
    sum += acc;
    sum_sq += acc * acc;
  }
  const double R = static_cast<double>(paths.replicas());
  const double mean = sum / R;
  const double var = paths.replicas() > 1 ? std::max(0.0, (sum_sq - R * mean * mean) / (R - 1.0)) : 0.0;
  return {mean, Estimator::kPlugIn, std::sqrt(var / R), 1.0};
}

// ---------------------------------------------------------------------------
// Monotonicity under projection to one particle

// Local-linear bin regression of b_N,i on x_i at every node, pooled over
// particles. The in-sample fit is an orthogonal projection, so its energy
// never exceeds that of the drift it projects.
class ProjectedDriftFit {
 public:
  ProjectedDriftFit(DriftSpec drift, TimeGrid grid, Bins bins = Bins::line(-6.0, 6.0, 48))
      : drift_(std::move(drift)), grid_(grid), bins_(std::move(bins)) {
    if (drift_.dim() != 1 || bins_.dim() != 1) throw InputError("projected drift: only one coordinate is supported");
    sums_.assign(grid_.n_steps() * bins_.size(), {});
  }

  void add(const PathEnsemble& paths) {
    check(paths);
    const std::size_t N = paths.particles();
    std::vector<double> b(N);
    for (std::size_t r = 0; r < paths.replicas(); ++r) {
      for (std::size_t k = 0; k < grid_.n_steps(); ++k) {
        const auto x = paths.state(r, paths.require_slot(k));
        evaluate_drift(drift_, x, N, grid_.time(k), b);
        for (std::size_t i = 0; i < N; ++i) {
          auto& s = sums_[k * bins_.size() + *bins_.locate(x.subspan(i, 1), true)];
          s[0] += 1.0;
          s[1] += x[i];
          s[2] += x[i] * x[i];
          s[3] += b[i];
          s[4] += x[i] * b[i];
        }
      }
    }
  }

  void finalize() {
    coef_.assign(sums_.size(), {0.0, 0.0});
    for (std::size_t j = 0; j < sums_.size(); ++j) {
      const auto& s = sums_[j];
      if (s[0] == 0.0) continue;
      const double det = s[0] * s[2] - s[1] * s[1];
      if (s[0] >= 3.0 && det > 1e-10 * s[0] * s[2]) {
        coef_[j][1] = (s[0] * s[4] - s[1] * s[3]) / det;
        coef_[j][0] = (s[3] - coef_[j][1] * s[1]) / s[0];
      } else {
        coef_[j][0] = s[3] / s[0];
      }
    }
  }

  double predict(std::size_t k, double x) const {
    const auto& c = coef_[k * bins_.size() + *bins_.locate(std::span<const double>(&x, 1), true)];
    return c[0] + c[1] * x;
  }

  // Per-replica sums over particles and nodes of |b_hat|^2 dt and |b|^2 dt.
  void evaluate(const PathEnsemble& paths, const std::function<void(double projected, double full)>& visit) const {
    check(paths);
    if (coef_.empty()) throw MisuseError("projected drift: finalize before evaluating");
    const std::size_t N = paths.particles();
    std::vector<double> b(N);
    for (std::size_t r = 0; r < paths.replicas(); ++r) {
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t k = 0; k < grid_.n_steps(); ++k) {
        const auto x = paths.state(r, paths.require_slot(k));
        evaluate_drift(drift_, x, N, grid_.time(k), b);
        double a = 0.0, f = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          const double p = predict(k, x[i]);
          a += p * p;
          f += b[i] * b[i];
        }
        lhs += a * grid_.dt();
        rhs += f * grid_.dt();
      }
      visit(lhs, rhs);
    }
  }

 private:
  void check(const PathEnsemble& paths) const {
    if (paths.drift_id() != drift_.id()) throw MisuseError("projected drift: paths were not simulated under this drift");
    if (!(paths.grid() == grid_)) throw InputError("projected drift: time grid mismatch");
  }

  DriftSpec drift_;
  TimeGrid grid_;
  Bins bins_;
  std::vector<std::array<double, 5>> sums_;
  std::vector<std::array<double, 2>> coef_;
};

struct MonotonicityRecord {
  std::size_t n = 1;
  std::size_t N = 0;
  double lhs = 0.0;  // (kappa / n) E int |E[b_N,1 | x_1]|^2, i.e. the n-marginal against W per particle
  double rhs = 0.0;  // (kappa / N) E int sum_i |b_N,i|^2
  double stderr_ = 0.0;  // of rhs - lhs across replicas
  bool holds = true;
};

class MonotonicityAccumulator {
 public:
  MonotonicityAccumulator(const DriftSpec& drift, const TimeGrid& grid, double kappa) : kappa_(kappa) {
    if (drift.is_pairwise()) fit_.emplace(drift, grid);
    drift_ = drift;
  }

  // Pairwise drifts need two passes over identical ensembles: fit, then evaluate.
  bool needs_fit() const { return fit_.has_value(); }
  void fit(const PathEnsemble& paths) {
    if (fit_) fit_->add(paths);
  }
  void end_fit() {
    if (fit_) fit_->finalize();
  }

  void evaluate(const PathEnsemble& paths) {
    N_ = paths.particles();
    if (fit_) {
      fit_->evaluate(paths, [&](double l, double r) { push(l, r); });
      return;
    }
    // a single-particle drift is its own conditional expectation
    if (paths.drift_id() != drift_.id()) throw MisuseError("monotonicity: paths were not simulated under this drift");
    const auto& g = paths.grid();
    std::vector<double> b(paths.particles() * paths.dim());
    for (std::size_t r = 0; r < paths.replicas(); ++r) {
      double f = 0.0;
      for (std::size_t k = 0; k < g.n_steps(); ++k) {
        evaluate_drift(drift_, paths.state(r, paths.require_slot(k)), paths.particles(), g.time(k), b);
        for (double v : b) f += v * v * g.dt();
      }
      push(f, f);
    }
  }

  MonotonicityRecord record() const {
    if (R_ == 0) throw InputError("monotonicity: no replicas");
    const double R = static_cast<double>(R_), n = static_cast<double>(N_);
    MonotonicityRecord m;
    m.N = N_;
    m.lhs = kappa_ * lhs_ / R / n;
    m.rhs = kappa_ * rhs_ / R / n;
    const double md = (rhs_ - lhs_) / R;
    const double var = R_ > 1 ? std::max(0.0, (diff_sq_ - R * md * md) / (R - 1.0)) : 0.0;
    m.stderr_ = kappa_ * std::sqrt(var / R) / n;
    m.holds = m.lhs <= m.rhs + 2.0 * m.stderr_;
    return m;
  }

 private:
  void push(double l, double r) {
    lhs_ += l;
    rhs_ += r;
    diff_sq_ += (r - l) * (r - l);
    ++R_;
  }

  double kappa_;
  DriftSpec drift_ = DriftSpec::zero(1);
  std::optional<ProjectedDriftFit> fit_;
  double lhs_ = 0.0, rhs_ = 0.0, diff_sq_ = 0.0;
  std::size_t R_ = 0, N_ = 0;
};

inline MonotonicityRecord monotonicity_check(const PathEnsemble& paths, const DriftSpec& drift_N, std::size_t n,
                                             double kappa) {
  check_kappa(kappa);
  if (n != 1) throw InputError("monotonicity: only n = 1 projections are supported");
  if (n >= paths.particles()) throw InputError("monotonicity: n must be below N");
  MonotonicityAccumulator acc(drift_N, paths.grid(), kappa);
  acc.fit(paths);
  acc.end_fit();
  acc.evaluate(paths);
  return acc.record();
}

// ---------------------------------------------------------------------------
// Entropy liminf

struct LiminfRecord {
  double h_limit = 0.0;
  std::vector<double> h;
  bool holds = true;
};

// Compares int rho log rho of the limit density with the tail of the
// single-particle marginal entropies. Each density must have second moment
// at most `moment_bound`.
inline LiminfRecord entropy_liminf_check(std::span<const DensityEstimate> marginals, const DensityEstimate& limit,
                                         double moment_bound, double tolerance = 0.02) {
  if (marginals.empty()) throw InputError("liminf: no marginal densities");
  auto second_moment = [](const DensityEstimate& d) {
    return d.expect([](std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v * v;
      return s;
    });
  };
  for (const auto& d : marginals) {
    if (second_moment(d) > moment_bound) throw PreconditionFailure("liminf: second moment exceeds the declared bound");
  }
  if (second_moment(limit) > moment_bound) throw PreconditionFailure("liminf: limit second moment exceeds the declared bound");
  LiminfRecord r;
  r.h_limit = boltzmann_entropy(limit).value;
  for (const auto& d : marginals) r.h.push_back(boltzmann_entropy(d).value);
  const std::size_t from = r.h.size() >= 2 ? r.h.size() - 2 : 0;
  const double tail = *std::min_element(r.h.begin() + static_cast<std::ptrdiff_t>(from), r.h.end());
  r.holds = r.h_limit <= tail + tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Entropy-chaos curves

struct ChaosRun {
  std::size_t N = 0;
  DriftSpec drift = DriftSpec::zero(1);
  const PathEnsemble* paths = nullptr;
};

struct WeakChaosCurve {
  EntropyValue limit;               // H(P|W) per particle
  std::vector<EntropyValue> value;  // KL(P_N|W^N) / N
  std::vector<double> gap;          // value - limit
  bool gap_decreasing = true;
};

inline WeakChaosCurve weak_entropy_chaos_curve(std::span<const ChaosRun> runs, const DriftSpec& limit_drift,
                                               const PathEnsemble& limit_run, double kappa) {
  check_kappa(kappa);
  WeakChaosCurve c;
  const DriftSpec wiener = DriftSpec::zero(limit_drift.dim());
  c.limit = normalized_kl(path_relative_entropy_girsanov(limit_run, limit_drift, wiener, kappa), limit_run.particles());
  for (const auto& run : runs) {
    if (!(run.paths->grid() == limit_run.grid())) throw InputError("weak chaos: runs must share the time grid");
    c.value.push_back(normalized_kl(path_relative_entropy_girsanov(*run.paths, run.drift, wiener, kappa), run.N));
    c.gap.push_back(c.value.back().value - c.limit.value);
  }
  for (std::size_t i = 1; i < c.gap.size(); ++i) c.gap_decreasing &= std::abs(c.gap[i]) < std::abs(c.gap[i - 1]);
  return c;
}

struct StrongChaosCurve {
  std::vector<EntropyValue> value;  // H(P_N | P^N) / N
  SlopeFit slope;
  std::vector<std::string> warnings;
};

inline StrongChaosCurve strong_entropy_chaos_curve(std::span<const ChaosRun> runs, const DriftSpec& limit_drift,
                                                   double kappa) {
  check_kappa(kappa);
  if (!limit_drift.is_single_particle()) throw MisuseError("strong chaos: the limit drift must act on one particle");
  StrongChaosCurve c;
  std::vector<double> xs, ys;
  for (const auto& run : runs) {
    if (!is_exchangeable(run.drift, run.N)) c.warnings.push_back("drift is not exchangeable at N = " + std::to_string(run.N));
    c.value.push_back(normalized_kl(path_relative_entropy_girsanov(*run.paths, run.drift, limit_drift, kappa), run.N));
    xs.push_back(static_cast<double>(run.N));
    ys.push_back(c.value.back().value);
  }
  if (xs.size() >= 2 && std::all_of(ys.begin(), ys.end(), [](double v) { return v > 0.0; })) c.slope = fit_loglog(xs, ys);
  return c;
}

// ---------------------------------------------------------------------------
// Streaming sweep

struct ChaosRow {
  std::size_t N = 0;
  EntropyValue kl_wiener;  // KL(P_N|W^N) / N
  double gap = 0.0;        // kl_wiener - H(P|W)
  EntropyValue strong;     // H(P_N|P^N) / N
  double strong_oracle = std::numeric_limits<double>::quiet_NaN();
  double weak_oracle = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> tv;  // TV(rho_N^1(t), rho(t)) at the report's tv_times
  std::vector<KacDistance> kac;
  MonotonicityRecord monotonicity;
};

struct ChaosReport {
  std::vector<double> tv_times;
  std::vector<double> kac_times;
  std::size_t kac_k = 2;
  EntropyValue limit;  // H(P|W) per particle
  double limit_oracle = std::numeric_limits<double>::quiet_NaN();
  std::vector<ChaosRow> rows;
  std::vector<CklpRecord> pairs;
  SlopeFit slope;
  bool gap_decreasing = true;
  std::vector<std::string> warnings;

  CsvTable csv(const std::string& provenance = {}) const {
    std::vector<std::string> head{"N",           "kl_wiener",     "kl_wiener_stderr", "limit_entropy", "gap",
                                  "strong",      "strong_stderr", "strong_oracle",    "weak_oracle"};
    for (double t : tv_times) head.push_back("tv_t" + fmt_num(t));
    for (double t : kac_times) head.push_back("bl_k" + std::to_string(kac_k) + "_t" + fmt_num(t));
    for (const char* h : {"mono_lhs", "mono_rhs", "mono_stderr", "mono_holds"}) head.emplace_back(h);
    CsvTable out(head, provenance);
    for (const auto& r : rows) {
      std::vector<std::string> cells{std::to_string(r.N),     fmt_num(r.kl_wiener.value), fmt_num(r.kl_wiener.stderr_),
                                     fmt_num(limit.value),    fmt_num(r.gap),             fmt_num(r.strong.value),
                                     fmt_num(r.strong.stderr_), fmt_num(r.strong_oracle), fmt_num(r.weak_oracle)};
      for (double v : r.tv) cells.push_back(fmt_num(v));
      for (const auto& k : r.kac) cells.push_back(fmt_num(k.distance));
      cells.push_back(fmt_num(r.monotonicity.lhs));
      cells.push_back(fmt_num(r.monotonicity.rhs));
      cells.push_back(fmt_num(r.monotonicity.stderr_));
      cells.push_back(r.monotonicity.holds ? "1" : "0");
      out.row(std::move(cells));
    }
    std::vector<std::string> footer(head.size());
    footer[0] = "slope";
    footer[1] = fmt_num(slope.slope);
    footer[2] = "slope_ci";
    footer[3] = fmt_num(slope.ci_half);
    out.row(std::move(footer));
    return out;
  }
};

struct ChaosSweepOptions {
  std::vector<std::size_t> N_sweep{2, 8, 32, 128};
  std::size_t replicas = 2000;
  std::size_t chunk = 250;
  std::size_t limit_particles = 0;  // 0: largest N of the sweep
  std::uint64_t seed = 0;
  double kappa = 0.5;
  unsigned threads = 1;
  std::vector<double> tv_times{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> kac_times{0.5, 0.75, 1.0};
  std::size_t kac_k = 2;
  SpatialGrid density_grid = SpatialGrid::line(-6.0, 6.0, 601);
  double bandwidth = 0.0;  // 0: Silverman
  bool monotonicity = true;
};

// Simulates every N of the sweep and the limit run with one seed, so all of
// them share their Brownian increments particle by particle, and folds the
// chunks into the report without keeping whole ensembles.
inline ChaosReport run_chaos_sweep(const DriftSpec& model, const DriftSpec& limit_drift, const InitialLaw& init,
                                   const TimeGrid& grid, const ChaosSweepOptions& opt) {
  check_kappa(opt.kappa);
  if (opt.N_sweep.empty()) throw ConfigError("chaos sweep: empty N sweep");
  for (std::size_t i = 0; i < opt.N_sweep.size(); ++i) {
    if (opt.N_sweep[i] == 0 || (i > 0 && opt.N_sweep[i] <= opt.N_sweep[i - 1])) throw ConfigError("N_sweep: not increasing");
  }
  if (!limit_drift.is_single_particle()) throw MisuseError("chaos sweep: the limit drift must act on one particle");
  auto node_of = [&](double t) {
    const std::size_t k = grid.node_near(t);
    if (std::abs(grid.time(k) - t) > 1e-9 * (1.0 + grid.horizon())) throw InputError("chaos sweep: time " + fmt_num(t) + " is not a grid node");
    return k;
  };
  std::vector<std::size_t> tv_nodes, kac_nodes;
  for (double t : opt.tv_times) tv_nodes.push_back(node_of(t));
  for (double t : opt.kac_times) kac_nodes.push_back(node_of(t));

  ChaosReport rep;
  rep.tv_times = opt.tv_times;
  rep.kac_times = opt.kac_times;
  rep.kac_k = opt.kac_k;
  const DriftSpec wiener = DriftSpec::zero(model.dim());
  const InitialSampler sampler = sampler_for(init);
  SimulationOptions sim;
  sim.threads = opt.threads;

  // limit run
  const std::size_t n_lim = opt.limit_particles ? opt.limit_particles : opt.N_sweep.back();
  DriftEnergyAccumulator lim_energy(limit_drift, wiener);
  std::vector<DensityAccumulator> lim_dens;
  for (std::size_t q = 0; q < tv_nodes.size(); ++q) lim_dens.emplace_back(opt.density_grid, opt.bandwidth);
  KacLimitAccumulator lim_kac(kac_nodes);
  simulate_in_chunks(limit_drift, sampler, init.dim(), grid, n_lim, opt.replicas, opt.seed, opt.chunk, sim,
                     [&](const PathEnsemble& c) {
                       lim_energy.add(c);
                       for (std::size_t q = 0; q < tv_nodes.size(); ++q) lim_dens[q].add_node(c, tv_nodes[q]);
                       lim_kac.add(c);
                     });
  rep.limit = normalized_kl(lim_energy.value(opt.kappa), n_lim);
  std::vector<DensityEstimate> lim_rho;
  for (const auto& d : lim_dens) lim_rho.push_back(d.finalize());

  std::vector<double> xs, ys;
  for (std::size_t N : opt.N_sweep) {
    if (!is_exchangeable(model, N)) rep.warnings.push_back("drift is not exchangeable at N = " + std::to_string(N));
    DriftEnergyAccumulator weak(model, wiener), strong(model, limit_drift);
    std::vector<DensityAccumulator> dens;
    for (std::size_t q = 0; q < tv_nodes.size(); ++q) dens.emplace_back(opt.density_grid, opt.bandwidth);
    const bool kac_ok = opt.kac_k <= N && !kac_nodes.empty();
    KacBlockAccumulator kac(std::min(opt.kac_k, N), kac_nodes);
    const bool mono_ok = opt.monotonicity && N > 1 && model.dim() == 1;
    MonotonicityAccumulator mono(model, grid, opt.kappa);
    simulate_in_chunks(model, sampler, init.dim(), grid, N, opt.replicas, opt.seed, opt.chunk, sim, [&](const PathEnsemble& c) {
      weak.add(c);
      strong.add(c);
      for (std::size_t q = 0; q < tv_nodes.size(); ++q) dens[q].add_node(c, tv_nodes[q]);
      if (kac_ok) kac.add(c);
      if (mono_ok) {
        if (mono.needs_fit()) {
          mono.fit(c);
        } else {
          mono.evaluate(c);
        }
      }
    });
    if (mono_ok && mono.needs_fit()) {
      mono.end_fit();
      simulate_in_chunks(model, sampler, init.dim(), grid, N, opt.replicas, opt.seed, opt.chunk, sim,
                         [&](const PathEnsemble& c) { mono.evaluate(c); });
    }

    ChaosRow row;
    row.N = N;
    row.kl_wiener = normalized_kl(weak.value(opt.kappa), N);
    row.gap = row.kl_wiener.value - rep.limit.value;
    row.strong = normalized_kl(strong.value(opt.kappa), N);
    for (std::size_t q = 0; q < tv_nodes.size(); ++q) {
      const auto rho = dens[q].finalize();
      auto pair = cklp_check(rho, lim_rho[q], 0.01, "N=" + std::to_string(N) + " t=" + fmt_num(opt.tv_times[q]));
      row.tv.push_back(pair.tv);
      rep.pairs.push_back(std::move(pair));
    }
    if (kac_ok) {
      row.kac = kac_distances(kac, lim_kac, grid);
    } else {
      for (double t : opt.kac_times) row.kac.push_back({t, std::numeric_limits<double>::quiet_NaN(), "n/a"});
    }
    if (mono_ok) {
      row.monotonicity = mono.record();
    } else {
      row.monotonicity = {1, N, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0.0, true};
    }
    xs.push_back(static_cast<double>(N));
    ys.push_back(row.strong.value);
    rep.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    rep.gap_decreasing &= std::abs(rep.rows[i].gap) < std::abs(rep.rows[i - 1].gap);
  }
  if (xs.size() >= 2 && std::all_of(ys.begin(), ys.end(), [](double v) { return v > 0.0; })) {
    rep.slope = fit_loglog(xs, ys);
  } else {
    rep.warnings.push_back("strong-chaos slope not fitted: needs two or more positive values");
  }
  return rep;
}

}  // namespace chaosbench
