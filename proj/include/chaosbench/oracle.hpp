#pragma once

// Closed-form Gaussian references for linear models. Nothing here calls the
// estimators: moments come from their own ODE integrator and quadrature, and
// the path-space relative entropy has a second, convention-free route through
// exact Gaussian transition kernels.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "chaosbench/error.hpp"
#include "chaosbench/models.hpp"

namespace chaosbench {

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct GaussianLaw {
  TimeGrid grid;
  std::vector<Eigen::VectorXd> mean;  // per node
  std::vector<Eigen::MatrixXd> cov;   // per node

  std::size_t dim() const { return mean.empty() ? 0 : static_cast<std::size_t>(mean.front().size()); }
  GaussianMoments at(std::size_t node) const { return {mean[node], cov[node]}; }
};

inline GaussianMoments gaussian_moments(const InitialLaw& init) {
  const auto* g = std::get_if<GaussianInit>(&init.payload());
  if (g == nullptr) {
    if (const auto* p = std::get_if<PointMassInit>(&init.payload())) {
      const auto d = static_cast<Eigen::Index>(p->location.size());
      return {Eigen::Map<const Eigen::VectorXd>(p->location.data(), d), Eigen::MatrixXd::Zero(d, d)};
    }
    throw PreconditionFailure("oracle: initial law must be Gaussian or a point mass");
  }
  return {Eigen::Map<const Eigen::VectorXd>(g->mean.data(), static_cast<Eigen::Index>(g->mean.size())), g->cov};
}

// dm/dt = (A + beta) m, dS/dt = A S + S A^T + I, classical RK4 with
// `substeps` steps per grid interval.
inline GaussianLaw propagate_gaussian(const Eigen::MatrixXd& A, double beta, const GaussianMoments& init,
                                      const TimeGrid& grid, std::size_t substeps = 8) {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || init.mean.size() != d || init.cov.rows() != d) throw ConfigError("oracle: dimension mismatch");
  const Eigen::MatrixXd B = A + beta * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  auto fm = [&](const Eigen::VectorXd& m) -> Eigen::VectorXd { return B * m; };
  auto fs = [&](const Eigen::MatrixXd& S) -> Eigen::MatrixXd { return A * S + S * A.transpose() + I; };
  GaussianLaw law{grid, {init.mean}, {init.cov}};
  Eigen::VectorXd m = init.mean;
  Eigen::MatrixXd S = init.cov;
  const double h = grid.dt() / static_cast<double>(substeps);
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    for (std::size_t s = 0; s < substeps; ++s) {
      const Eigen::VectorXd m1 = fm(m), m2 = fm(m + 0.5 * h * m1), m3 = fm(m + 0.5 * h * m2), m4 = fm(m + h * m3);
      const Eigen::MatrixXd s1 = fs(S), s2 = fs(S + 0.5 * h * s1), s3 = fs(S + 0.5 * h * s2), s4 = fs(S + h * s3);
      m += h / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
      S += h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
      S = 0.5 * (S + S.transpose());
    }
    law.mean.push_back(m);
    law.cov.push_back(S);
  }
  return law;
}

inline GaussianLaw propagate_gaussian(const Eigen::MatrixXd& A, double beta, const InitialLaw& init,
                                      const TimeGrid& grid, std::size_t substeps = 8) {
  return propagate_gaussian(A, beta, gaussian_moments(init), grid, substeps);
}

namespace detail {

inline bool singular(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  return eig.eigenvalues().minCoeff() <= 1e-300;
}

}  // namespace detail

// int rho log rho = -(1/2) log((2 pi e)^d det S); +infinity when singular.
inline double gaussian_entropy(const GaussianMoments& g) {
  if (detail::singular(g.cov)) return std::numeric_limits<double>::infinity();
  const double d = static_cast<double>(g.cov.rows());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(g.cov.determinant()));
}

inline double gaussian_kl(const GaussianMoments& p, const GaussianMoments& q) {
  if (p.mean == q.mean && p.cov == q.cov) return 0.0;
  if (detail::singular(p.cov) || detail::singular(q.cov)) {
    if ((p.mean - q.mean).norm() == 0.0 && (p.cov - q.cov).norm() == 0.0) return 0.0;
    return std::numeric_limits<double>::infinity();
  }
  const Eigen::LLT<Eigen::MatrixXd> lq(q.cov);
  const Eigen::VectorXd dm = q.mean - p.mean;
  const double d = static_cast<double>(p.cov.rows());
  const double tr = lq.solve(p.cov).trace();
  const double quad = dm.dot(lq.solve(dm));
  const double logdet = std::log(q.cov.determinant()) - std::log(p.cov.determinant());
  return std::max(0.0, 0.5 * (tr - d + quad + logdet));
}

// int |u|^2 rho with u = grad rho / (2 rho): trace(S^-1) / 4.
inline double gaussian_fisher_u(const GaussianMoments& g) {
  if (detail::singular(g.cov)) return std::numeric_limits<double>::infinity();
  return 0.25 * g.cov.inverse().trace();
}

namespace detail {

inline double trapezoid(const std::vector<double>& f, double h) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < f.size(); ++k) s += 0.5 * (f[k] + f[k + 1]) * h;
  return s;
}

// Composite Simpson rule; a trailing odd interval gets the trapezoid rule.
inline double simpson(const std::vector<double>& f, double h) {
  const std::size_t n = f.size() - 1;
  const std::size_t even = n - n % 2;
  double s = 0.0;
  for (std::size_t k = 0; k + 2 <= even; k += 2) s += h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
  if (even < n) s += 0.5 * h * (f[n - 1] + f[n]);
  return s;
}

}  // namespace detail

// kappa int_0^T E|dA X_t + d_beta m(t)|^2 dt for dX = (A X + beta m) dt + dW
// against the reference drift ref_A x + ref_beta m.
inline double oracle_path_relative_entropy(const Eigen::MatrixXd& A, double beta, const GaussianMoments& init,
                                           const TimeGrid& grid, const Eigen::MatrixXd& ref_A, double ref_beta,
                                           double kappa, std::size_t substeps = 8) {
  const TimeGrid fine(grid.horizon(), grid.n_steps() * substeps);
  const GaussianLaw law = propagate_gaussian(A, beta, init, fine, 1);
  const Eigen::MatrixXd dA = A - ref_A;
  const double db = beta - ref_beta;
  std::vector<double> f(law.mean.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Eigen::VectorXd shift = dA * law.mean[k] + db * law.mean[k];
    f[k] = (dA * law.cov[k] * dA.transpose()).trace() + shift.squaredNorm();
  }
  return kappa * detail::simpson(f, fine.dt());
}

inline double oracle_path_relative_entropy(const Eigen::MatrixXd& A, double beta, const InitialLaw& init,
                                           const TimeGrid& grid, const Eigen::MatrixXd& ref_A, double ref_beta,
                                           double kappa, std::size_t substeps = 8) {
  return oracle_path_relative_entropy(A, beta, gaussian_moments(init), grid, ref_A, ref_beta, kappa, substeps);
}

// Relative entropy of dX = A X dt + dW against Brownian motion with the same
// initial law, by the chain rule over `steps` exact Gaussian transitions
// N(F x, Q) versus N(x, h I). No convention factor enters.
inline double oracle_chain_rule_entropy(const Eigen::MatrixXd& A, const GaussianMoments& init, double horizon,
                                        std::size_t steps = 2000) {
  const Eigen::Index d = A.rows();
  const double h = horizon / static_cast<double>(steps);
  // Van Loan: exp([[-A, I], [0, A^T]] h) = [[., C12], [0, C22]], F = C22^T, Q = F C12
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  M.topLeftCorner(d, d) = -A;
  M.topRightCorner(d, d) = Eigen::MatrixXd::Identity(d, d);
  M.bottomRightCorner(d, d) = A.transpose();
  const Eigen::MatrixXd C = (M * h).exp();
  const Eigen::MatrixXd F = C.bottomRightCorner(d, d).transpose();
  Eigen::MatrixXd Q = F * C.topRightCorner(d, d);
  Q = 0.5 * (Q + Q.transpose());
  const Eigen::MatrixXd G = F - Eigen::MatrixXd::Identity(d, d);
  const double dd = static_cast<double>(d);
  const double step_const = 0.5 * ((Q / h).trace() - dd - std::log((Q / h).determinant()));
  Eigen::VectorXd m = init.mean;
  Eigen::MatrixXd S = init.cov;
  double total = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double drift_part = (G * S * G.transpose()).trace() + (G * m).squaredNorm();
    total += step_const + 0.5 * drift_part / h;
    m = F * m;
    S = F * S * F.transpose() + Q;
  }
  return total;
}

// kappa theta^2 int_0^T E|xbar_N|^2 dt for the linear mean-field system
// b_i = -k x_i + (theta/N) sum_j (x_j - x_i) from i.i.d. centered Gaussians;
// d/dt E|xbar|^2 = -2k E|xbar|^2 + d/N.
inline double oracle_strong_chaos_value(double theta, std::size_t N, const InitialLaw& init, const TimeGrid& grid,
                                        double kappa, double confinement = 1.0, std::size_t substeps = 8) {
  const GaussianMoments g = gaussian_moments(init);
  if (g.mean.norm() != 0.0) throw PreconditionFailure("oracle: strong chaos value needs a centered initial law");
  const double n = static_cast<double>(N), d = static_cast<double>(g.mean.size());
  const TimeGrid fine(grid.horizon(), grid.n_steps() * substeps);
  const double h = fine.dt();
  auto rhs = [&](double q) { return -2.0 * confinement * q + d / n; };
  double q = g.cov.trace() / n;
  std::vector<double> f{q};
  for (std::size_t k = 0; k < fine.n_steps(); ++k) {
    const double k1 = rhs(q), k2 = rhs(q + 0.5 * h * k1), k3 = rhs(q + 0.5 * h * k2), k4 = rhs(q + h * k3);
    q += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    f.push_back(q);
  }
  return kappa * theta * theta * detail::simpson(f, h);
}

// Per-particle kappa int_0^T (1/N) sum_i E|b_i|^2 dt for the same system,
// from the closed pair S = E (1/N) sum |x_i|^2, Q = E|xbar|^2.
inline double oracle_mean_field_weak_value(double theta, std::size_t N, const InitialLaw& init, const TimeGrid& grid,
                                           double kappa, double confinement = 1.0, std::size_t substeps = 8) {
  const GaussianMoments g = gaussian_moments(init);
  if (g.mean.norm() != 0.0) throw PreconditionFailure("oracle: mean-field weak value needs a centered initial law");
  const double n = static_cast<double>(N), d = static_cast<double>(g.mean.size());
  const double a = confinement + theta;
  const TimeGrid fine(grid.horizon(), grid.n_steps() * substeps);
  const double h = fine.dt();
  auto rhs = [&](const Eigen::Vector2d& y) {
    return Eigen::Vector2d(-2.0 * a * y[0] + 2.0 * theta * y[1] + d, -2.0 * confinement * y[1] + d / n);
  };
  auto integrand = [&](const Eigen::Vector2d& y) { return a * a * y[0] - (2.0 * a * theta - theta * theta) * y[1]; };
  Eigen::Vector2d y(g.cov.trace(), g.cov.trace() / n);
  std::vector<double> f{integrand(y)};
  for (std::size_t k = 0; k < fine.n_steps(); ++k) {
    const Eigen::Vector2d k1 = rhs(y), k2 = rhs(y + 0.5 * h * k1), k3 = rhs(y + 0.5 * h * k2), k4 = rhs(y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    f.push_back(integrand(y));
  }
  return kappa * detail::simpson(f, h);
}

// Mean trajectory of the McKean-Vlasov limit b(x, t) = alpha x + beta m(t):
// dm/dt = (alpha + beta) m.
inline std::vector<std::vector<double>> oracle_limit_mean(double alpha, double beta, const InitialLaw& init,
                                                          const TimeGrid& grid) {
  const GaussianMoments g = gaussian_moments(init);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
    const double f = std::exp((alpha + beta) * grid.time(k));
    std::vector<double> m(static_cast<std::size_t>(g.mean.size()));
    for (std::size_t c = 0; c < m.size(); ++c) m[c] = f * g.mean[static_cast<Eigen::Index>(c)];
    out.push_back(std::move(m));
  }
  return out;
}

// Which (kappa, boundary orientation) makes
//   H(P|W) = kappa [ int int (|u|^2 + |v|^2) rho + s (H(rho_0) - H(rho_T)) ]
// true, with s = +1 (initial minus final) or s = -1 (final minus initial).
// Every term is a Gaussian closed form; the truth is the chain-rule entropy.
struct ConventionCase {
  std::string model;
  double truth = 0.0;
  double kinetic = 0.0;   // int int (|u|^2 + |v|^2) rho
  double energy = 0.0;    // int int |b|^2 rho
  double h0 = 0.0, hT = 0.0;
  double candidate[2][2] = {{0, 0}, {0, 0}};  // [kappa 1, kappa 1/2][s = +1, s = -1]
};

struct ConventionReport {
  std::vector<ConventionCase> cases;
  bool matched[2][2] = {{true, true}, {true, true}};
  double tolerance = 0.02;
  bool resolved = false;
  double kappa = 0.0;
  std::string boundary;  // "H(rho_T)-H(rho_0)" or "H(rho_0)-H(rho_T)"

  std::string summary() const {
    if (!resolved) return "unresolved";
    return "kappa=" + detail::fmt_double(kappa) + ", boundary=" + boundary;
  }
};

inline ConventionCase convention_case(std::string name, const Eigen::MatrixXd& A, const GaussianMoments& init,
                                      double horizon, std::size_t steps = 4000) {
  ConventionCase c;
  c.model = std::move(name);
  const TimeGrid grid(horizon, steps);
  const GaussianLaw law = propagate_gaussian(A, 0.0, init, grid, 1);
  std::vector<double> fu, fv, fb;
  for (std::size_t k = 0; k < law.mean.size(); ++k) {
    const Eigen::MatrixXd& S = law.cov[k];
    const Eigen::VectorXd& m = law.mean[k];
    const Eigen::MatrixXd Si = S.inverse();
    // v(x) = A x + S^-1 (x - m) / 2
    const Eigen::MatrixXd M = A + 0.5 * Si;
    fu.push_back(0.25 * Si.trace());
    fv.push_back((M * S * M.transpose()).trace() + (A * m).squaredNorm());
    fb.push_back((A * S * A.transpose()).trace() + (A * m).squaredNorm());
  }
  c.kinetic = detail::trapezoid(fu, grid.dt()) + detail::trapezoid(fv, grid.dt());
  c.energy = detail::trapezoid(fb, grid.dt());
  c.h0 = gaussian_entropy(law.at(0));
  c.hT = gaussian_entropy(law.at(grid.n_steps()));
  c.truth = oracle_chain_rule_entropy(A, init, horizon);
  const double kap[2] = {1.0, 0.5};
  for (int i = 0; i < 2; ++i) {
    c.candidate[i][0] = kap[i] * (c.kinetic + c.h0 - c.hT);
    c.candidate[i][1] = kap[i] * (c.kinetic + c.hT - c.h0);
  }
  return c;
}

// Three non-stationary linear models: a relaxing scalar OU, a contracting
// scalar OU started wide, and a rotating 2-d drift.
inline ConventionReport validate_kappa_convention(double tolerance = 0.02) {
  ConventionReport rep;
  rep.tolerance = tolerance;
  Eigen::MatrixXd a1(1, 1), a2(1, 1), a3(2, 2);
  a1 << -1.0;
  a2 << -2.0;
  a3 << -1.0, 0.5, -0.5, -1.0;
  Eigen::VectorXd m1(1), m2(1), m3(2);
  m1 << 1.0;
  m2 << 0.0;
  m3 << 1.0, 0.0;
  Eigen::MatrixXd s1(1, 1), s2(1, 1), s3(2, 2);
  s1 << 1.0;
  s2 << 2.0;
  s3 << 1.0, 0.0, 0.0, 0.5;
  rep.cases.push_back(convention_case("ou_a=-1_from_N(1,1)", a1, {m1, s1}, 1.0));
  rep.cases.push_back(convention_case("ou_a=-2_from_N(0,2)", a2, {m2, s2}, 1.0));
  rep.cases.push_back(convention_case("rotation_2d_from_N((1,0),diag(1,0.5))", a3, {m3, s3}, 1.0));
  for (const auto& c : rep.cases) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        if (std::abs(c.candidate[i][j] - c.truth) > tolerance * std::abs(c.truth)) rep.matched[i][j] = false;
      }
    }
  }
  int hits = 0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (rep.matched[i][j]) {
        ++hits;
        rep.kappa = i == 0 ? 1.0 : 0.5;
        rep.boundary = j == 0 ? "H(rho_0)-H(rho_T)" : "H(rho_T)-H(rho_0)";
      }
    }
  }
  rep.resolved = hits == 1;
  return rep;
}

}  // namespace chaosbench
