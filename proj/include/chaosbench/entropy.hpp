#pragma once

// Boltzmann entropy, Fisher information, kinetic energy, path-space relative
// entropy through the Girsanov drift functional, grid KL and total variation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "chaosbench/density.hpp"
#include "chaosbench/error.hpp"
#include "chaosbench/models.hpp"
#include "chaosbench/path_ensemble.hpp"

namespace chaosbench {

enum class Estimator { kPlugIn, kGirsanov, kClosedForm };

inline const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kPlugIn: return "plug-in";
    case Estimator::kGirsanov: return "girsanov";
    case Estimator::kClosedForm: return "closed-form";
  }
  return "?";
}

// Value in nats. Relative entropies may be +infinity (no absolute continuity).
struct EntropyValue {
  double value = 0.0;
  Estimator estimator = Estimator::kPlugIn;
  double stderr_ = 0.0;
  double kappa = 1.0;

  bool infinite() const { return std::isinf(value) && value > 0; }
  static EntropyValue infinity(Estimator e, double kappa = 1.0) {
    return {std::numeric_limits<double>::infinity(), e, 0.0, kappa};
  }
};

namespace detail {

inline double sum_fn(const DensityEstimate& d, auto&& f) {
  double s = 0.0;
  for (std::size_t j = 0; j < d.values.size(); ++j) s += d.grid.weight(j) * f(j);
  return s;
}

inline void require_same_grid(const DensityEstimate& p, const DensityEstimate& q, const char* op) {
  if (!(p.grid == q.grid)) throw InputError(std::string(op) + ": density grids do not match");
}

}  // namespace detail

// int rho log rho, with 0 log 0 = 0. A standard normal gives -log(2 pi e)/2.
inline EntropyValue boltzmann_entropy(const DensityEstimate& dens) {
  const double h = detail::sum_fn(dens, [&](std::size_t j) {
    const double r = dens.values[j];
    return r > 0.0 ? r * std::log(r) : 0.0;
  });
  return {h, Estimator::kPlugIn, 0.0, 1.0};
}

// int |u|^2 rho over reliable nodes, u = grad rho / (2 rho). This is a quarter
// of the Fisher information in the |grad log rho|^2 convention.
inline EntropyValue fisher_information(const DensityEstimate& dens) {
  const VelocityField u = osmotic_velocity(dens);
  const std::size_t d = u.dim();
  const double f = detail::sum_fn(dens, [&](std::size_t j) {
    if (!u.reliable[j]) return 0.0;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += u.values[j * d + c] * u.values[j * d + c];
    return s * dens.values[j];
  });
  return {f, Estimator::kPlugIn, 0.0, 1.0};
}

inline double field_energy(const VelocityField& v, const DensityEstimate& dens) {
  if (!(v.grid == dens.grid)) throw InputError("field energy: grids do not match");
  const std::size_t d = v.dim();
  return detail::sum_fn(dens, [&](std::size_t j) {
    if (!v.reliable[j]) return 0.0;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += v.values[j * d + c] * v.values[j * d + c];
    return s * dens.values[j];
  });
}

struct KineticEnergy {
  double osmotic = 0.0;  // int_0^T int |u|^2 rho
  double current = 0.0;  // int_0^T int |v|^2 rho
  EntropyValue total;
};

// Time-trapezoidal int int (|u|^2 + |v|^2) rho dx dt.
inline KineticEnergy kinetic_energy_functional(std::span<const DensityEstimate> dens, std::span<const VelocityField> v,
                                               std::span<const double> times) {
  if (dens.empty() || dens.size() != v.size() || dens.size() != times.size()) {
    throw InputError("kinetic energy: sequences must have matching lengths");
  }
  std::vector<double> fu(dens.size()), fv(dens.size());
  for (std::size_t k = 0; k < dens.size(); ++k) {
    if (!(dens[k].grid == v[k].grid)) throw InputError("kinetic energy: grids do not match");
    fu[k] = fisher_information(dens[k]).value;
    fv[k] = field_energy(v[k], dens[k]);
  }
  KineticEnergy out;
  for (std::size_t k = 0; k + 1 < dens.size(); ++k) {
    const double dt = times[k + 1] - times[k];
    out.osmotic += 0.5 * (fu[k] + fu[k + 1]) * dt;
    out.current += 0.5 * (fv[k] + fv[k + 1]) * dt;
  }
  out.total = {out.osmotic + out.current, Estimator::kPlugIn, 0.0, 1.0};
  return out;
}

// Both orientations of the boundary term in the entropy decomposition:
// kappa * (kinetic + H(rho_0) - H(rho_T)) and kappa * (kinetic + H(rho_T) - H(rho_0)).
struct EntropyDecomposition {
  double initial_minus_final = 0.0;
  double final_minus_initial = 0.0;
};

inline EntropyDecomposition entropy_decomposition(double kinetic, double h0, double hT, double kappa) {
  return {kappa * (kinetic + h0 - hT), kappa * (kinetic + hT - h0)};
}

inline void check_kappa(double kappa) {
  if (kappa != 1.0 && kappa != 0.5) throw ConfigError("kappa must be 1 or 1/2");
}

// Mergeable sums of the drift energy sum_k sum_i |b_a - b_b|^2 dt per replica.
// b_b is evaluated on the same N x d configuration, which for a
// single-particle drift is the product-law drift b(x_i, t).
class DriftEnergyAccumulator {
 public:
  DriftEnergyAccumulator(DriftSpec numerator, DriftSpec reference)
      : num_(std::move(numerator)), ref_(std::move(reference)), same_(num_.id() == ref_.id()) {
    if (num_.dim() != ref_.dim()) throw ConfigError("drift energy: drift dimensions differ");
  }

  const DriftSpec& numerator() const { return num_; }

  void add(const PathEnsemble& paths) {
    if (paths.drift_id() != num_.id()) {
      throw MisuseError("drift energy: paths were simulated under '" + paths.drift_id() + "', not under the numerator '" +
                        num_.id() + "'");
    }
    // an interacting drift cannot be evaluated on a subset of its particles
    if (paths.marginal_source() != 0 && num_.is_pairwise()) {
      throw MisuseError("drift energy: needs the full particle system, not a marginal");
    }
    const auto& g = paths.grid();
    for (std::size_t k = 0; k < g.n_steps(); ++k) paths.require_slot(k);
    particles_ = paths.particles();
    const std::size_t n = paths.particles() * paths.dim();
    std::vector<double> a(n), b(n);
    for (std::size_t r = 0; r < paths.replicas(); ++r) {
      double acc = 0.0;
      if (!same_) {
        for (std::size_t k = 0; k < g.n_steps(); ++k) {
          const auto x = paths.state(r, paths.require_slot(k));
          const double t = g.time(k);
          evaluate_drift(num_, x, paths.particles(), t, a);
          evaluate_drift(ref_, x, paths.particles(), t, b);
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
          acc += s * g.dt();
        }
      }
      sum_ += acc;
      sum_sq_ += acc * acc;
      ++replicas_;
    }
  }

  std::size_t replicas() const { return replicas_; }
  std::size_t particles() const { return particles_; }

  // kappa * mean over replicas, with the standard error of the mean.
  EntropyValue value(double kappa) const {
    if (replicas_ == 0) throw InputError("drift energy: no replicas");
    const double n = static_cast<double>(replicas_);
    const double mean = sum_ / n;
    const double var = replicas_ > 1 ? std::max(0.0, (sum_sq_ - n * mean * mean) / (n - 1.0)) : 0.0;
    return {kappa * mean, Estimator::kGirsanov, kappa * std::sqrt(var / n), kappa};
  }

 private:
  DriftSpec num_, ref_;
  bool same_;
  double sum_ = 0.0, sum_sq_ = 0.0;
  std::size_t replicas_ = 0, particles_ = 0;
};

// kappa (1/R) sum_r sum_k |b_num - b_ref|^2 dt over all particles. The paths
// must have been simulated under drift_num.
inline EntropyValue path_relative_entropy_girsanov(const PathEnsemble& paths, const DriftSpec& drift_num,
                                                   const DriftSpec& drift_ref, double kappa = 0.5) {
  check_kappa(kappa);
  DriftEnergyAccumulator acc(drift_num, drift_ref);
  acc.add(paths);
  return acc.value(kappa);
}

// int p log(p / max(q, eps)); +infinity if p puts more than 1e-3 mass where q < eps.
inline EntropyValue kl_divergence_density(const DensityEstimate& p, const DensityEstimate& q) {
  detail::require_same_grid(p, q, "kl divergence");
  const double eps = q.floor;
  const double stranded = detail::sum_fn(p, [&](std::size_t j) { return q.values[j] < eps ? p.values[j] : 0.0; });
  if (stranded > 1e-3) return EntropyValue::infinity(Estimator::kPlugIn);
  const double kl = detail::sum_fn(p, [&](std::size_t j) {
    const double a = p.values[j];
    return a > 0.0 ? a * std::log(a / std::max(q.values[j], eps)) : 0.0;
  });
  return {std::max(kl, 0.0), Estimator::kPlugIn, 0.0, 1.0};
}

// int |p - q|, in [0, 2].
inline double tv_distance(const DensityEstimate& p, const DensityEstimate& q) {
  detail::require_same_grid(p, q, "tv distance");
  return std::min(2.0, detail::sum_fn(p, [&](std::size_t j) { return std::abs(p.values[j] - q.values[j]); }));
}

struct CklpRecord {
  double tv = 0.0;
  double kl = 0.0;
  double slack = 0.0;  // 2 kl - tv^2
  bool holds = true;
  std::string label;
};

inline CklpRecord cklp_check(const DensityEstimate& p, const DensityEstimate& q, double tolerance = 0.01,
                             std::string label = {}) {
  CklpRecord r;
  r.tv = tv_distance(p, q);
  r.kl = kl_divergence_density(p, q).value;
  r.slack = 2.0 * r.kl - r.tv * r.tv;
  r.holds = r.slack >= -tolerance;
  r.label = std::move(label);
  return r;
}

inline EntropyValue normalized_kl(const EntropyValue& h, std::size_t particle_count) {
  if (particle_count < 1) throw InputError("normalized kl: particle count must be at least 1");
  const double n = static_cast<double>(particle_count);
  return {h.value / n, h.estimator, h.stderr_ / n, h.kappa};
}

inline CsvTable entropy_csv_header(const std::string& provenance = {}) {
  return CsvTable({"quantity", "value", "stderr", "estimator", "kappa"}, provenance);
}

inline void entropy_csv_row(CsvTable& t, const std::string& quantity, const EntropyValue& v) {
  t.row({quantity, fmt_num(v.value), fmt_num(v.stderr_), estimator_name(v.estimator), fmt_num(v.kappa)});
}

}  // namespace chaosbench
