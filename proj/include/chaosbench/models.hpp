#pragma once

// Declarative drift fields, initial laws and time grids. Everything here is
// immutable after construction and safe to share between threads.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "chaosbench/error.hpp"
#include "chaosbench/grid.hpp"
#include "chaosbench/rng.hpp"

namespace chaosbench {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_list(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt_double(v[i]);
  }
  return s + "]";
}

}  // namespace detail

class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("grid: horizon T must be positive");
    if (n_steps < 1) throw ConfigError("grid: n_steps must be at least 1");
  }

  double horizon() const { return horizon_; }
  std::size_t n_steps() const { return n_steps_; }
  double dt() const { return horizon_ / static_cast<double>(n_steps_); }

  double time(std::size_t k) const {
    return k == n_steps_ ? horizon_ : static_cast<double>(k) * dt();
  }

  // Nearest node to a time in [0, T].
  std::size_t node_near(double t) const {
    if (t < -1e-12 * horizon_ || t > horizon_ * (1 + 1e-12)) throw InputError("time outside [0, T]");
    const double k = std::round(t / dt());
    return std::min(static_cast<std::size_t>(std::max(k, 0.0)), n_steps_);
  }

  // Left-endpoint node of the step containing t.
  std::size_t node_left(double t) const {
    const double pos = t / dt();
    auto k = static_cast<std::size_t>(std::floor(pos + 1e-9));
    return std::min(k, n_steps_);
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_ = 1.0;
  std::size_t n_steps_ = 1;
};

using VectorFn = std::function<void(std::span<const double> in, std::span<double> out)>;

// Gradient of the pair potential, r -> grad Phi(r). Must be odd.
class PairKernel {
 public:
  enum class Kind { kLinear, kTanh, kCustom };

  // grad Phi(r) = coefficient * r. A negative coefficient attracts.
  static PairKernel linear(double coefficient) { return PairKernel(Kind::kLinear, coefficient, 1.0, {}); }
  // grad Phi(r) = coefficient * tanh(r / length), componentwise.
  static PairKernel tanh(double coefficient, double length) {
    if (!(length > 0.0)) throw ConfigError("tanh kernel length must be positive");
    return PairKernel(Kind::kTanh, coefficient, length, {});
  }
  static PairKernel custom(VectorFn fn, std::string name = "custom") {
    PairKernel k(Kind::kCustom, 0.0, 1.0, std::move(fn));
    k.name_ = std::move(name);
    return k;
  }

  Kind kind() const { return kind_; }
  double coefficient() const { return coefficient_; }
  double length() const { return length_; }

  void apply(std::span<const double> r, std::span<double> out) const {
    switch (kind_) {
      case Kind::kLinear:
        for (std::size_t c = 0; c < r.size(); ++c) out[c] = coefficient_ * r[c];
        break;
      case Kind::kTanh:
        for (std::size_t c = 0; c < r.size(); ++c) out[c] = coefficient_ * std::tanh(r[c] / length_);
        break;
      case Kind::kCustom:
        fn_(r, out);
        break;
    }
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::kLinear:
        return "linear(" + detail::fmt_double(coefficient_) + ")";
      case Kind::kTanh:
        return "tanh(" + detail::fmt_double(coefficient_) + "," + detail::fmt_double(length_) + ")";
      case Kind::kCustom:
        break;
    }
    return name_;
  }

 private:
  PairKernel(Kind kind, double coefficient, double length, VectorFn fn)
      : kind_(kind), coefficient_(coefficient), length_(length), fn_(std::move(fn)) {}

  Kind kind_;
  double coefficient_;
  double length_;
  VectorFn fn_;
  std::string name_;
};

// Gradient of the confining potential, x -> grad U(x).
class Confinement {
 public:
  enum class Kind { kNone, kLinear, kQuartic, kCustom };

  static Confinement none() { return Confinement(Kind::kNone, 0.0, {}); }
  // grad U(x) = coefficient * x
  static Confinement linear(double coefficient) { return Confinement(Kind::kLinear, coefficient, {}); }
  // grad U(x) = coefficient * x^3, componentwise
  static Confinement quartic(double coefficient) { return Confinement(Kind::kQuartic, coefficient, {}); }
  static Confinement custom(VectorFn fn, std::string name = "custom") {
    Confinement c(Kind::kCustom, 0.0, std::move(fn));
    c.name_ = std::move(name);
    return c;
  }

  Kind kind() const { return kind_; }
  double coefficient() const { return coefficient_; }

  void apply(std::span<const double> x, std::span<double> out) const {
    switch (kind_) {
      case Kind::kNone:
        std::fill(out.begin(), out.end(), 0.0);
        break;
      case Kind::kLinear:
        for (std::size_t c = 0; c < x.size(); ++c) out[c] = coefficient_ * x[c];
        break;
      case Kind::kQuartic:
        for (std::size_t c = 0; c < x.size(); ++c) out[c] = coefficient_ * x[c] * x[c] * x[c];
        break;
      case Kind::kCustom:
        fn_(x, out);
        break;
    }
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::kNone:
        return "none";
      case Kind::kLinear:
        return "linear(" + detail::fmt_double(coefficient_) + ")";
      case Kind::kQuartic:
        return "quartic(" + detail::fmt_double(coefficient_) + ")";
      case Kind::kCustom:
        break;
    }
    return name_;
  }

 private:
  Confinement(Kind kind, double coefficient, VectorFn fn) : kind_(kind), coefficient_(coefficient), fn_(std::move(fn)) {}

  Kind kind_;
  double coefficient_;
  VectorFn fn_;
  std::string name_;
};

struct ZeroDrift {};

struct ConstantDrift {
  std::vector<double> c;
};

struct LinearDrift {
  Eigen::MatrixXd A;
};

// b_i = -grad U(x_i) + (1/N) sum_j grad Phi(x_i - x_j), j = i included.
struct PairwiseMeanField {
  PairKernel grad_kernel;
  Confinement confinement;
};

// b(x, t) = alpha x + beta m(t), with m tabulated on its own time grid
// (left-endpoint lookup).
struct ClosedFormLimit {
  double alpha = 0.0;
  double beta = 0.0;
  TimeGrid grid;
  std::vector<std::vector<double>> mean;  // one length-d vector per node
};

// Time-dependent field on a spatial grid: multilinear in space,
// piecewise constant (left endpoint) in time.
struct TabulatedDrift {
  SpatialGrid grid;
  std::vector<double> times;   // ascending
  std::vector<double> values;  // [time][node][coordinate]
  bool clamp_outside = false;  // default: queries outside the grid are errors
};

class DriftSpec {
 public:
  using Payload = std::variant<ZeroDrift, ConstantDrift, LinearDrift, PairwiseMeanField, ClosedFormLimit, TabulatedDrift>;

  static DriftSpec zero(std::size_t dim) { return DriftSpec(ZeroDrift{}, dim); }
  static DriftSpec constant(std::vector<double> c) {
    const auto d = c.size();
    return DriftSpec(ConstantDrift{std::move(c)}, d);
  }
  static DriftSpec linear(Eigen::MatrixXd A) {
    const auto d = static_cast<std::size_t>(A.rows());
    return DriftSpec(LinearDrift{std::move(A)}, d);
  }
  static DriftSpec linear_scalar(double a) { return linear(Eigen::MatrixXd::Constant(1, 1, a)); }
  static DriftSpec pairwise(PairKernel kernel, Confinement confinement, std::size_t dim) {
    return DriftSpec(PairwiseMeanField{std::move(kernel), std::move(confinement)}, dim);
  }
  // b_i = -confinement x_i + (theta/N) sum_j (x_j - x_i)
  static DriftSpec linear_mean_field(double theta, double confinement = 1.0, std::size_t dim = 1) {
    return pairwise(PairKernel::linear(-theta), Confinement::linear(confinement), dim);
  }
  static DriftSpec closed_form_limit(double alpha, double beta, TimeGrid grid, std::vector<std::vector<double>> mean) {
    const auto d = mean.empty() ? 0 : mean.front().size();
    return DriftSpec(ClosedFormLimit{alpha, beta, grid, std::move(mean)}, d);
  }
  static DriftSpec tabulated(TabulatedDrift t, std::size_t dim) { return DriftSpec(std::move(t), dim); }

  DriftSpec(Payload payload, std::size_t dim) : payload_(std::move(payload)), dim_(dim) {
    validate();
    id_ = describe();
  }

  const Payload& payload() const { return payload_; }
  std::size_t dim() const { return dim_; }
  // Provenance tag stamped on every ensemble simulated under this drift.
  const std::string& id() const { return id_; }

  DriftSpec with_id(std::string id) const {
    DriftSpec copy = *this;
    copy.id_ = std::move(id);
    return copy;
  }

  bool is_zero() const { return std::holds_alternative<ZeroDrift>(payload_); }
  bool is_pairwise() const { return std::holds_alternative<PairwiseMeanField>(payload_); }

  // True when every particle's drift depends on its own position only.
  bool is_single_particle() const { return !is_pairwise(); }

 private:
  std::string describe() const;
  void validate() const;

  Payload payload_;
  std::size_t dim_;
  std::string id_;
};

inline std::string DriftSpec::describe() const {
  return std::visit(
      [&](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ZeroDrift>) {
          return "zero(d=" + std::to_string(dim_) + ")";
        } else if constexpr (std::is_same_v<T, ConstantDrift>) {
          return "constant" + detail::fmt_list(p.c);
        } else if constexpr (std::is_same_v<T, LinearDrift>) {
          std::vector<double> flat(p.A.data(), p.A.data() + p.A.size());
          return "linear" + detail::fmt_list(flat);
        } else if constexpr (std::is_same_v<T, PairwiseMeanField>) {
          return "pairwise(kernel=" + p.grad_kernel.describe() + ",confinement=" + p.confinement.describe() +
                 ",d=" + std::to_string(dim_) + ")";
        } else if constexpr (std::is_same_v<T, ClosedFormLimit>) {
          std::uint64_t h = hash_name("m");
          for (const auto& m : p.mean) {
            for (double v : m) h = hash_name(detail::fmt_double(v)) ^ (h * 0x100000001B3ULL);
          }
          return "closed_form_limit(" + detail::fmt_double(p.alpha) + "," + detail::fmt_double(p.beta) + ",m#" +
                 std::to_string(h) + ")";
        } else {
          std::uint64_t h = hash_name("tab");
          for (double v : p.values) h = hash_name(detail::fmt_double(v)) ^ (h * 0x100000001B3ULL);
          return "tabulated#" + std::to_string(h);
        }
      },
      payload_);
}

inline void DriftSpec::validate() const {
  if (dim_ < 1) throw ConfigError("drift: spatial dimension must be at least 1");
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ConstantDrift>) {
          if (p.c.size() != dim_) throw ConfigError("drift: constant has wrong dimension");
          for (double v : p.c) {
            if (!std::isfinite(v)) throw ConfigError("drift: constant must be finite");
          }
        } else if constexpr (std::is_same_v<T, LinearDrift>) {
          if (static_cast<std::size_t>(p.A.rows()) != dim_ || static_cast<std::size_t>(p.A.cols()) != dim_) {
            throw ConfigError("drift: linear coefficient matrix must be d x d");
          }
          if (!p.A.allFinite()) throw ConfigError("drift: linear coefficients must be finite");
        } else if constexpr (std::is_same_v<T, PairwiseMeanField>) {
          // Sampled oddness check of the interaction kernel.
          std::vector<double> r(dim_), mr(dim_), g(dim_), mg(dim_);
          for (int s = 0; s < 16; ++s) {
            for (std::size_t c = 0; c < dim_; ++c) {
              r[c] = 0.37 * (s - 7.5) + 0.11 * static_cast<double>(c);
              mr[c] = -r[c];
            }
            p.grad_kernel.apply(r, g);
            p.grad_kernel.apply(mr, mg);
            for (std::size_t c = 0; c < dim_; ++c) {
              if (std::abs(g[c] + mg[c]) > 1e-12 * (1.0 + std::abs(g[c]))) {
                throw ConfigError("drift: pair kernel gradient must be odd");
              }
            }
          }
        } else if constexpr (std::is_same_v<T, ClosedFormLimit>) {
          if (p.mean.size() != p.grid.n_steps() + 1) {
            throw ConfigError("drift: closed-form limit needs one mean vector per time node");
          }
          for (const auto& m : p.mean) {
            if (m.size() != dim_) throw ConfigError("drift: closed-form mean has wrong dimension");
          }
        } else if constexpr (std::is_same_v<T, TabulatedDrift>) {
          if (p.grid.dim() != dim_) throw ConfigError("drift: tabulated grid dimension mismatch");
          if (p.times.empty() || !std::is_sorted(p.times.begin(), p.times.end())) {
            throw ConfigError("drift: tabulated times must be non-empty and ascending");
          }
          if (p.values.size() != p.times.size() * p.grid.size() * dim_) {
            throw ConfigError("drift: tabulated value count does not match grid");
          }
          for (double v : p.values) {
            if (!std::isfinite(v)) throw ConfigError("drift: tabulated values must be finite");
          }
        }
      },
      payload_);
}

// b_N(x, t) for an N x d configuration stored particle-major in `state`.
inline void evaluate_drift(const DriftSpec& spec, std::span<const double> state, std::size_t n_particles, double t,
                           std::span<double> out) {
  const std::size_t d = spec.dim();
  if (n_particles == 0 || state.size() != n_particles * d || out.size() != state.size()) {
    throw ConfigError("evaluate_drift: state dimensions do not match the drift specification");
  }
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ZeroDrift>) {
          std::fill(out.begin(), out.end(), 0.0);
        } else if constexpr (std::is_same_v<T, ConstantDrift>) {
          for (std::size_t i = 0; i < n_particles; ++i) {
            for (std::size_t c = 0; c < d; ++c) out[i * d + c] = p.c[c];
          }
        } else if constexpr (std::is_same_v<T, LinearDrift>) {
          for (std::size_t i = 0; i < n_particles; ++i) {
            for (std::size_t r = 0; r < d; ++r) {
              double acc = 0.0;
              for (std::size_t c = 0; c < d; ++c) acc += p.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * state[i * d + c];
              out[i * d + r] = acc;
            }
          }
        } else if constexpr (std::is_same_v<T, PairwiseMeanField>) {
          const double inv_n = 1.0 / static_cast<double>(n_particles);
          std::vector<double> buf(d), r(d);
          if (p.grad_kernel.kind() == PairKernel::Kind::kLinear) {
            // (1/N) sum_j c (x_i - x_j) = c (x_i - mean)
            std::vector<double> mean(d, 0.0);
            for (std::size_t j = 0; j < n_particles; ++j) {
              for (std::size_t c = 0; c < d; ++c) mean[c] += state[j * d + c];
            }
            for (double& m : mean) m *= inv_n;
            const double coef = p.grad_kernel.coefficient();
            for (std::size_t i = 0; i < n_particles; ++i) {
              p.confinement.apply(state.subspan(i * d, d), buf);
              for (std::size_t c = 0; c < d; ++c) out[i * d + c] = -buf[c] + coef * (state[i * d + c] - mean[c]);
            }
          } else {
            for (std::size_t i = 0; i < n_particles; ++i) {
              std::vector<double> acc(d, 0.0);
              for (std::size_t j = 0; j < n_particles; ++j) {
                for (std::size_t c = 0; c < d; ++c) r[c] = state[i * d + c] - state[j * d + c];
                p.grad_kernel.apply(r, buf);
                for (std::size_t c = 0; c < d; ++c) acc[c] += buf[c];
              }
              p.confinement.apply(state.subspan(i * d, d), buf);
              for (std::size_t c = 0; c < d; ++c) out[i * d + c] = -buf[c] + inv_n * acc[c];
            }
          }
        } else if constexpr (std::is_same_v<T, ClosedFormLimit>) {
          if (t < -1e-12 || t > p.grid.horizon() * (1 + 1e-12)) {
            throw ExtrapolationError("closed-form limit queried outside its time grid");
          }
          const auto& m = p.mean[p.grid.node_left(t)];
          for (std::size_t i = 0; i < n_particles; ++i) {
            for (std::size_t c = 0; c < d; ++c) out[i * d + c] = p.alpha * state[i * d + c] + p.beta * m[c];
          }
        } else {
          const double tol = 1e-9 * (1.0 + std::abs(p.times.back()));
          if (t < p.times.front() - tol) throw ExtrapolationError("tabulated drift queried before its first time");
          auto it = std::upper_bound(p.times.begin(), p.times.end(), t + tol);
          const auto slab = static_cast<std::size_t>(std::distance(p.times.begin(), it)) - 1;
          const std::size_t g = p.grid.size();
          for (std::size_t i = 0; i < n_particles; ++i) {
            const auto st = p.grid.stencil(state.subspan(i * d, d), p.clamp_outside);
            for (std::size_t c = 0; c < d; ++c) {
              double acc = 0.0;
              for (std::size_t s = 0; s < st.count; ++s) acc += st.weight[s] * p.values[(slab * g + st.index[s]) * d + c];
              out[i * d + c] = acc;
            }
          }
        }
      },
      spec.payload());
}

inline std::vector<double> evaluate_drift(const DriftSpec& spec, std::span<const double> state, std::size_t n_particles,
                                          double t) {
  std::vector<double> out(state.size());
  evaluate_drift(spec, state, n_particles, t, out);
  return out;
}

struct GaussianInit {
  std::vector<double> mean;
  Eigen::MatrixXd cov;
};

struct PointMassInit {
  std::vector<double> location;
};

struct UniformBoxInit {
  std::vector<double> lower;
  std::vector<double> upper;
};

// Law of each particle at t = 0; particles start i.i.d.
class InitialLaw {
 public:
  using Payload = std::variant<GaussianInit, PointMassInit, UniformBoxInit>;

  static InitialLaw gaussian(std::vector<double> mean, Eigen::MatrixXd cov) {
    return InitialLaw(GaussianInit{std::move(mean), std::move(cov)});
  }
  static InitialLaw gaussian_scalar(double mean, double variance) {
    return gaussian({mean}, Eigen::MatrixXd::Constant(1, 1, variance));
  }
  static InitialLaw point_mass(std::vector<double> location) { return InitialLaw(PointMassInit{std::move(location)}); }
  static InitialLaw uniform_box(std::vector<double> lower, std::vector<double> upper) {
    return InitialLaw(UniformBoxInit{std::move(lower), std::move(upper)});
  }

  explicit InitialLaw(Payload payload) : payload_(std::move(payload)) { validate(); }

  const Payload& payload() const { return payload_; }
  std::size_t dim() const { return dim_; }
  bool has_density() const { return !std::holds_alternative<PointMassInit>(payload_); }

  void require_density(const char* operation) const {
    if (!has_density()) {
      throw PreconditionFailure(std::string(operation) + " requires an initial law with finite entropy");
    }
  }

  // Draws the initial position of one particle.
  void sample(const ReplicaStream& stream, std::uint32_t particle, std::span<double> out) const {
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, GaussianInit>) {
            std::vector<double> z(dim_);
            stream.normals(0, particle, StreamTag::kInitialNormal, z);
            for (std::size_t r = 0; r < dim_; ++r) {
              double acc = p.mean[r];
              for (std::size_t c = 0; c < dim_; ++c) acc += sqrt_cov_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * z[c];
              out[r] = acc;
            }
          } else if constexpr (std::is_same_v<T, PointMassInit>) {
            std::copy(p.location.begin(), p.location.end(), out.begin());
          } else {
            std::vector<double> u(dim_);
            stream.uniforms(0, particle, StreamTag::kInitialUniform, u);
            for (std::size_t c = 0; c < dim_; ++c) out[c] = p.lower[c] + (p.upper[c] - p.lower[c]) * u[c];
          }
        },
        payload_);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, GaussianInit>) {
            std::vector<double> flat(p.cov.data(), p.cov.data() + p.cov.size());
            return "gaussian(" + detail::fmt_list(p.mean) + "," + detail::fmt_list(flat) + ")";
          } else if constexpr (std::is_same_v<T, PointMassInit>) {
            return "point_mass(" + detail::fmt_list(p.location) + ")";
          } else {
            return "uniform_box(" + detail::fmt_list(p.lower) + "," + detail::fmt_list(p.upper) + ")";
          }
        },
        payload_);
  }

 private:
  void validate() {
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, GaussianInit>) {
            dim_ = p.mean.size();
            if (dim_ == 0) throw ConfigError("init: gaussian mean must be non-empty");
            if (static_cast<std::size_t>(p.cov.rows()) != dim_ || static_cast<std::size_t>(p.cov.cols()) != dim_) {
              throw ConfigError("init: gaussian covariance must be d x d");
            }
            const double scale = 1.0 + p.cov.cwiseAbs().maxCoeff();
            if ((p.cov - p.cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
              throw ConfigError("init: covariance must be symmetric");
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.cov);
            if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
              throw ConfigError("init: covariance must be positive semidefinite");
            }
            const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            sqrt_cov_ = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
          } else if constexpr (std::is_same_v<T, PointMassInit>) {
            dim_ = p.location.size();
            if (dim_ == 0) throw ConfigError("init: point mass location must be non-empty");
          } else {
            dim_ = p.lower.size();
            if (dim_ == 0 || p.upper.size() != dim_) throw ConfigError("init: uniform box bounds must match");
            for (std::size_t c = 0; c < dim_; ++c) {
              if (!(p.lower[c] < p.upper[c])) throw ConfigError("init: uniform box requires lower < upper");
            }
          }
        },
        payload_);
  }

  Payload payload_;
  std::size_t dim_ = 0;
  Eigen::MatrixXd sqrt_cov_;
};

}  // namespace chaosbench
