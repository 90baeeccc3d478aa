#pragma once

// Grid densities from samples (binned Gaussian KDE) and the velocity fields
// built from them: score, osmotic u = score/2, current v = b - u.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "chaosbench/csv.hpp"
#include "chaosbench/error.hpp"
#include "chaosbench/grid.hpp"
#include "chaosbench/models.hpp"
#include "chaosbench/path_ensemble.hpp"

namespace chaosbench {

inline constexpr double kDensityFloor = 1e-8;

struct DensityEstimate {
  SpatialGrid grid;
  std::vector<double> values;
  double bandwidth = 0.0;  // 0 for densities given in closed form
  std::size_t sample_count = 0;
  double floor = kDensityFloor;
  bool coverage_warning = false;  // samples +- 3 bandwidths reach past the grid
  std::size_t outside = 0;        // samples that fell outside the grid

  std::size_t dim() const { return grid.dim(); }

  double integral() const {
    double s = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) s += grid.weight(j) * values[j];
    return s;
  }

  double max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }

  // Trapezoidal integral of g(x) rho(x).
  double expect(const std::function<double(std::span<const double>)>& g) const {
    std::vector<double> x(dim());
    double s = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (values[j] == 0.0) continue;
      grid.point(j, x);
      s += grid.weight(j) * values[j] * g(x);
    }
    return s;
  }
};

namespace detail {

inline void normalize(DensityEstimate& d) {
  for (double& v : d.values) v = std::max(v, 0.0);
  const double mass = d.integral();
  if (!(mass > 0.0) || !std::isfinite(mass)) throw EstimationFailure("density has no mass on the grid");
  for (double& v : d.values) v /= mass;
}

// Discrete Gaussian smoothing along one axis of a tensor grid.
inline void smooth_axis(const SpatialGrid& grid, std::size_t axis, double bw, std::vector<double>& field) {
  const Axis& a = grid.axis(axis);
  const double h = a.spacing();
  const auto reach = static_cast<std::ptrdiff_t>(std::ceil(6.0 * bw / h));
  std::vector<double> kernel(static_cast<std::size_t>(reach) + 1);
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * bw);
  for (std::ptrdiff_t m = 0; m <= reach; ++m) {
    const double z = static_cast<double>(m) * h / bw;
    kernel[static_cast<std::size_t>(m)] = norm * std::exp(-0.5 * z * z);
  }
  const auto n = static_cast<std::ptrdiff_t>(a.nodes);
  const std::size_t other = grid.size() / a.nodes;
  const std::size_t stride = (grid.dim() == 2 && axis == 0) ? grid.axis(1).nodes : 1;
  std::vector<double> line(a.nodes), out(a.nodes);
  for (std::size_t o = 0; o < other; ++o) {
    // o enumerates the lines parallel to `axis`
    const std::size_t base = (grid.dim() == 2 && axis == 1) ? o * a.nodes : o;
    for (std::ptrdiff_t i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = field[base + static_cast<std::size_t>(i) * stride];
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      double acc = 0.0;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - reach), hi = std::min<std::ptrdiff_t>(n - 1, i + reach);
      for (std::ptrdiff_t j = lo; j <= hi; ++j) {
        const double c = line[static_cast<std::size_t>(j)];
        if (c != 0.0) acc += c * kernel[static_cast<std::size_t>(std::abs(i - j))];
      }
      out[static_cast<std::size_t>(i)] = acc;
    }
    for (std::ptrdiff_t i = 0; i < n; ++i) field[base + static_cast<std::size_t>(i) * stride] = out[static_cast<std::size_t>(i)];
  }
}

}  // namespace detail

// Streaming kernel density estimator: samples are linearly binned onto the
// grid nodes as they arrive; the Gaussian smoothing happens in finalize().
// Bandwidth <= 0 selects the Silverman rule from the sample spread.
class DensityAccumulator {
 public:
  DensityAccumulator(SpatialGrid grid, double bandwidth, double floor = kDensityFloor)
      : grid_(std::move(grid)),
        bandwidth_(bandwidth),
        floor_(floor),
        counts_(grid_.size(), 0.0),
        sum_(grid_.dim(), 0.0),
        sum_sq_(grid_.dim(), 0.0),
        min_(grid_.dim(), std::numeric_limits<double>::infinity()),
        max_(grid_.dim(), -std::numeric_limits<double>::infinity()) {}

  const SpatialGrid& grid() const { return grid_; }
  std::size_t count() const { return n_; }

  void add(std::span<const double> x) {
    const std::size_t d = grid_.dim();
    if (x.size() != d) throw InputError("density: sample dimension does not match grid");
    ++n_;
    for (std::size_t c = 0; c < d; ++c) {
      sum_[c] += x[c];
      sum_sq_[c] += x[c] * x[c];
      min_[c] = std::min(min_[c], x[c]);
      max_[c] = std::max(max_[c], x[c]);
    }
    if (!grid_.contains(x)) {
      ++outside_;
      return;
    }
    const auto st = grid_.stencil(x);
    for (std::size_t s = 0; s < st.count; ++s) counts_[st.index[s]] += st.weight[s];
  }

  // Adds n points stored contiguously (n x d).
  void add_points(std::span<const double> points) {
    const std::size_t d = grid_.dim();
    for (std::size_t p = 0; p + d <= points.size(); p += d) add(points.subspan(p, d));
  }

  // Adds every particle (or the first `particles`) of every replica at one recorded node.
  void add_node(const PathEnsemble& paths, std::size_t node, std::size_t particles = 0) {
    if (paths.dim() != grid_.dim()) throw InputError("density: ensemble dimension does not match grid");
    const std::size_t slot = paths.require_slot(node);
    const std::size_t k = particles == 0 ? paths.particles() : std::min(particles, paths.particles());
    for (std::size_t r = 0; r < paths.replicas(); ++r) add_points(paths.state(r, slot).first(k * paths.dim()));
  }

  void merge(const DensityAccumulator& o) {
    if (!(o.grid_ == grid_)) throw InputError("density: cannot merge different grids");
    for (std::size_t j = 0; j < counts_.size(); ++j) counts_[j] += o.counts_[j];
    for (std::size_t c = 0; c < grid_.dim(); ++c) {
      sum_[c] += o.sum_[c];
      sum_sq_[c] += o.sum_sq_[c];
      min_[c] = std::min(min_[c], o.min_[c]);
      max_[c] = std::max(max_[c], o.max_[c]);
    }
    n_ += o.n_;
    outside_ += o.outside_;
  }

  double silverman_bandwidth() const {
    const double d = static_cast<double>(grid_.dim());
    double sd = 0.0;
    for (std::size_t c = 0; c < grid_.dim(); ++c) {
      const double m = sum_[c] / static_cast<double>(n_);
      sd += std::sqrt(std::max(0.0, sum_sq_[c] / static_cast<double>(n_) - m * m));
    }
    sd /= d;
    const double bw = sd * std::pow(4.0 / ((d + 2.0) * static_cast<double>(n_)), 1.0 / (d + 4.0));
    return bw > 0.0 ? bw : grid_.axis(0).spacing();
  }

  DensityEstimate finalize() const {
    if (n_ < 100) throw InputError("density: at least 100 samples are required");
    const double bw = bandwidth_ > 0.0 ? bandwidth_ : silverman_bandwidth();
    DensityEstimate est{grid_, counts_, bw, n_, floor_, false, outside_};
    for (std::size_t c = 0; c < grid_.dim(); ++c) {
      const Axis& a = grid_.axis(c);
      if (min_[c] - 3.0 * bw < a.lo || max_[c] + 3.0 * bw > a.hi) est.coverage_warning = true;
    }
    for (std::size_t c = 0; c < grid_.dim(); ++c) detail::smooth_axis(grid_, c, bw, est.values);
    detail::normalize(est);
    return est;
  }

 private:
  SpatialGrid grid_;
  double bandwidth_;
  double floor_;
  std::vector<double> counts_;
  std::vector<double> sum_, sum_sq_, min_, max_;
  std::size_t n_ = 0;
  std::size_t outside_ = 0;
};

// Gaussian-kernel estimate from n points stored contiguously (n x d).
inline DensityEstimate estimate_density(std::span<const double> samples, const SpatialGrid& grid, double bandwidth = 0.0,
                                        double floor = kDensityFloor) {
  DensityAccumulator acc(grid, bandwidth, floor);
  acc.add_points(samples);
  return acc.finalize();
}

inline DensityEstimate estimate_density_at(const PathEnsemble& paths, std::size_t node, const SpatialGrid& grid,
                                           double bandwidth = 0.0, std::size_t particles = 0) {
  DensityAccumulator acc(grid, bandwidth);
  acc.add_node(paths, node, particles);
  return acc.finalize();
}

// Tabulates a known density on the grid and normalizes it.
inline DensityEstimate density_from_function(const SpatialGrid& grid,
                                             const std::function<double(std::span<const double>)>& pdf,
                                             double floor = kDensityFloor) {
  DensityEstimate est{grid, std::vector<double>(grid.size()), 0.0, 0, floor, false, 0};
  std::vector<double> x(grid.dim());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    grid.point(j, x);
    est.values[j] = pdf(x);
  }
  detail::normalize(est);
  return est;
}

enum class FieldRole { kOsmotic, kCurrent, kTotal, kScore };

inline const char* role_name(FieldRole r) {
  switch (r) {
    case FieldRole::kOsmotic: return "osmotic";
    case FieldRole::kCurrent: return "current";
    case FieldRole::kTotal: return "total";
    case FieldRole::kScore: return "score";
  }
  return "?";
}

struct VelocityField {
  SpatialGrid grid;
  FieldRole role = FieldRole::kTotal;
  std::vector<double> values;           // [node][coordinate]
  std::vector<unsigned char> reliable;  // per node

  std::size_t dim() const { return grid.dim(); }
  double at(std::size_t node, std::size_t c = 0) const { return values[node * dim() + c]; }
};

// Central differences of log(max(rho, eps)), one-sided at the grid edges.
// Nodes below the floor are unreliable and carry 0.
inline VelocityField score_field(const DensityEstimate& dens) {
  const SpatialGrid& g = dens.grid;
  const std::size_t d = g.dim(), n = g.size();
  VelocityField f{g, FieldRole::kScore, std::vector<double>(n * d, 0.0), std::vector<unsigned char>(n, 0)};
  std::vector<double> logr(n);
  for (std::size_t j = 0; j < n; ++j) logr[j] = std::log(std::max(dens.values[j], dens.floor));
  for (std::size_t j = 0; j < n; ++j) {
    if (dens.values[j] < dens.floor) continue;
    f.reliable[j] = 1;
    const auto mi = g.multi_index(j);
    for (std::size_t c = 0; c < d; ++c) {
      const Axis& a = g.axis(c);
      const std::size_t i = mi[c];
      auto at = [&](std::size_t k) {
        auto m = mi;
        m[c] = k;
        return logr[d == 1 ? m[0] : g.index(m[0], m[1])];
      };
      double v;
      if (i == 0) {
        v = (at(1) - at(0)) / a.spacing();
      } else if (i + 1 == a.nodes) {
        v = (at(i) - at(i - 1)) / a.spacing();
      } else {
        v = (at(i + 1) - at(i - 1)) / (2.0 * a.spacing());
      }
      f.values[j * d + c] = v;
    }
  }
  return f;
}

// u = score / 2, and u = 0 where the density is below the floor.
inline VelocityField osmotic_velocity(const DensityEstimate& dens) {
  VelocityField f = score_field(dens);
  f.role = FieldRole::kOsmotic;
  for (double& v : f.values) v *= 0.5;
  return f;
}

// Single-particle drift b(., t) evaluated at the grid nodes.
inline VelocityField drift_field(const DriftSpec& spec, const SpatialGrid& grid, double t) {
  if (!spec.is_single_particle()) throw MisuseError("drift field: interacting drifts have no single-particle field");
  if (spec.dim() != grid.dim()) throw InputError("drift field: grid dimension does not match drift");
  std::vector<double> pts(grid.size() * grid.dim());
  for (std::size_t j = 0; j < grid.size(); ++j) grid.point(j, std::span<double>(pts).subspan(j * grid.dim(), grid.dim()));
  VelocityField f{grid, FieldRole::kTotal, std::vector<double>(pts.size()), std::vector<unsigned char>(grid.size(), 1)};
  evaluate_drift(spec, pts, grid.size(), t, f.values);
  return f;
}

// v = b - u nodewise.
inline VelocityField current_velocity(const VelocityField& total_drift, const DensityEstimate& dens) {
  if (!(total_drift.grid == dens.grid)) throw InputError("current velocity: grids do not match");
  const VelocityField u = osmotic_velocity(dens);
  VelocityField v{dens.grid, FieldRole::kCurrent, std::vector<double>(u.values.size()), u.reliable};
  for (std::size_t j = 0; j < v.values.size(); ++j) v.values[j] = total_drift.values[j] - u.values[j];
  for (std::size_t j = 0; j < v.reliable.size(); ++j) v.reliable[j] = u.reliable[j] && total_drift.reliable[j];
  return v;
}

struct TestFunction {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::string name;
};

// f(x) = |x|^2 chi(|x|), chi = 1 below r0 and 0 above r1 with a C2 quintic in between.
inline TestFunction cutoff_quadratic(double r0, double r1) {
  auto chi = [r0, r1](double s, double& dchi) {
    if (s <= r0) {
      dchi = 0.0;
      return 1.0;
    }
    if (s >= r1) {
      dchi = 0.0;
      return 0.0;
    }
    const double w = r1 - r0, u = (s - r0) / w;
    dchi = -30.0 * u * u * (u - 1.0) * (u - 1.0) / w;
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
  };
  TestFunction f;
  f.name = "cutoff_quadratic";
  f.value = [chi](std::span<const double> x) {
    double s2 = 0.0;
    for (double v : x) s2 += v * v;
    double dchi;
    return s2 * chi(std::sqrt(s2), dchi);
  };
  f.gradient = [chi](std::span<const double> x, std::span<double> g) {
    double s2 = 0.0;
    for (double v : x) s2 += v * v;
    const double s = std::sqrt(s2);
    double dchi;
    const double c = chi(s, dchi);
    for (std::size_t k = 0; k < x.size(); ++k) g[k] = 2.0 * x[k] * c + (s > 0.0 ? s * dchi * x[k] : 0.0);
  };
  return f;
}

inline TestFunction constant_function(double c) {
  return {[c](std::span<const double>) { return c; },
          [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); }, "constant"};
}

struct ContinuityResidual {
  double boundary = 0.0;  // int f rho(T) - int f rho(0)
  double flux = 0.0;      // int_0^T int (v . grad f) rho dx dt
  double residual = 0.0;  // |boundary - flux|
};

// Weak-form continuity equation on densities and current velocities given at
// ascending times; trapezoidal rule in space and time.
inline ContinuityResidual continuity_residual(std::span<const DensityEstimate> dens, std::span<const VelocityField> v,
                                              std::span<const double> times, const TestFunction& f) {
  if (dens.size() < 2 || dens.size() != v.size() || dens.size() != times.size()) {
    throw InputError("continuity residual: need matching sequences of at least two times");
  }
  const SpatialGrid& g = dens.front().grid;
  for (std::size_t k = 0; k < dens.size(); ++k) {
    if (!(dens[k].grid == g) || !(v[k].grid == g)) throw InputError("continuity residual: grids do not match");
  }
  const std::size_t d = g.dim();
  std::vector<double> x(d), grad(d);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const auto mi = g.multi_index(j);
    bool edge = false;
    for (std::size_t c = 0; c < d; ++c) edge = edge || mi[c] == 0 || mi[c] + 1 == g.axis(c).nodes;
    if (!edge) continue;
    g.point(j, x);
    if (std::abs(f.value(x)) <= 1e-12) continue;
    for (const auto& r : dens) {
      if (r.values[j] >= r.floor) throw InputError("continuity residual: test function must vanish where the density lives at the grid edge");
    }
  }
  std::vector<double> inner(dens.size(), 0.0);
  for (std::size_t k = 0; k < dens.size(); ++k) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!v[k].reliable[j] || dens[k].values[j] == 0.0) continue;
      g.point(j, x);
      f.gradient(x, grad);
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += v[k].values[j * d + c] * grad[c];
      inner[k] += g.weight(j) * dot * dens[k].values[j];
    }
  }
  ContinuityResidual out;
  for (std::size_t k = 0; k + 1 < dens.size(); ++k) out.flux += 0.5 * (inner[k] + inner[k + 1]) * (times[k + 1] - times[k]);
  out.boundary = dens.back().expect(f.value) - dens.front().expect(f.value);
  out.residual = std::abs(out.boundary - out.flux);
  return out;
}

namespace detail {

inline std::vector<std::string> coordinate_cells(const SpatialGrid& g, std::size_t j) {
  std::vector<double> x(g.dim());
  g.point(j, x);
  std::vector<std::string> cells;
  for (double v : x) cells.push_back(fmt_num(v));
  return cells;
}

inline std::vector<std::string> coordinate_header(const SpatialGrid& g) {
  return g.dim() == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
}

}  // namespace detail

inline CsvTable density_csv(const DensityEstimate& dens, const std::string& provenance = {}) {
  auto header = detail::coordinate_header(dens.grid);
  header.insert(header.end(), {"value", "reliable"});
  CsvTable t(header, provenance);
  for (std::size_t j = 0; j < dens.grid.size(); ++j) {
    auto cells = detail::coordinate_cells(dens.grid, j);
    cells.push_back(fmt_num(dens.values[j]));
    cells.push_back(dens.values[j] >= dens.floor ? "1" : "0");
    t.row(cells);
  }
  return t;
}

inline CsvTable velocity_csv(const VelocityField& f, const std::string& provenance = {}) {
  auto header = detail::coordinate_header(f.grid);
  if (f.dim() == 1) {
    header.push_back("value");
  } else {
    header.insert(header.end(), {"value_x", "value_y"});
  }
  header.push_back("reliable");
  CsvTable t(header, provenance);
  for (std::size_t j = 0; j < f.grid.size(); ++j) {
    auto cells = detail::coordinate_cells(f.grid, j);
    for (std::size_t c = 0; c < f.dim(); ++c) cells.push_back(fmt_num(f.at(j, c)));
    cells.push_back(f.reliable[j] ? "1" : "0");
    t.row(cells);
  }
  return t;
}

}  // namespace chaosbench
