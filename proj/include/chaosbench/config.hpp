#pragma once

// Experiment configuration: strict JSON, every diagnostic names the field path.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chaosbench/density.hpp"
#include "chaosbench/error.hpp"
#include "chaosbench/grid.hpp"
#include "chaosbench/models.hpp"
#include "chaosbench/oracle.hpp"
#include "chaosbench/rng.hpp"

namespace chaosbench {

using json = nlohmann::json;

inline const std::vector<std::string>& known_checks() {
  // dependency order
  static const std::vector<std::string> k{"oracle-validate", "entropy-report", "continuity-check", "reversal-check",
                                          "chaos-sweep"};
  return k;
}

namespace cfg {

// Typed view of a JSON value that knows where it sits in the document.
class Field {
 public:
  Field(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *j_; }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what); }

  // Rejects keys outside `allowed`.
  const Field& object(std::initializer_list<const char*> allowed) const {
    if (!j_->is_object()) fail("expected an object");
    for (const auto& [k, v] : j_->items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) throw ConfigError(child_path(k) + ": unknown key");
    }
    return *this;
  }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key) && !j_->at(key).is_null(); }

  Field operator[](const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    if (!j_->contains(key)) throw ConfigError(child_path(key) + ": required");
    return Field(j_->at(key), child_path(key));
  }

  Field operator[](std::size_t i) const {
    if (!j_->is_array() || i >= j_->size()) fail("index out of range");
    return Field(j_->at(i), path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    const double v = j_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  std::uint64_t count() const {
    if (!j_->is_number_integer() || (j_->is_number_integer() && !j_->is_number_unsigned() && j_->get<std::int64_t>() < 0)) {
      fail("expected a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  std::vector<double> numbers() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].number());
    return v;
  }

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].count());
    return v;
  }

  Eigen::MatrixXd matrix() const {
    const std::size_t rows = size();
    if (rows == 0) fail("expected a non-empty matrix");
    const std::size_t cols = (*this)[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      const Field row = (*this)[r];
      if (row.size() != cols) row.fail("ragged matrix row");
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].number();
    }
    return m;
  }

  double number_or(const std::string& key, double def) const { return has(key) ? (*this)[key].number() : def; }
  std::size_t count_or(const std::string& key, std::size_t def) const { return has(key) ? (*this)[key].count() : def; }
  bool boolean_or(const std::string& key, bool def) const { return has(key) ? (*this)[key].boolean() : def; }

  // Re-labels ConfigErrors thrown by model constructors with this field's path.
  template <class F>
  auto guard(F&& f) const {
    try {
      return f();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(path_, 0) == 0) throw;
      fail(msg);
    }
  }

 private:
  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* j_;
  std::string path_;
};

inline json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

inline SpatialGrid parse_spatial_grid(const Field& f) {
  if (f.has("axes")) {
    f.object({"axes"});
    std::vector<Axis> axes;
    const Field a = f["axes"];
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Field ax = a[i];
      ax.object({"lo", "hi", "nodes"});
      axes.push_back({ax["lo"].number(), ax["hi"].number(), ax["nodes"].count()});
    }
    return f.guard([&] { return SpatialGrid(axes); });
  }
  f.object({"lo", "hi", "nodes"});
  return f.guard([&] { return SpatialGrid::line(f["lo"].number(), f["hi"].number(), f["nodes"].count()); });
}

}  // namespace cfg

inline InitialLaw initial_law_from_json(const cfg::Field& f) {
  const std::string type = f["type"].string();
  if (type == "gaussian") {
    f.object({"type", "mean", "cov"});
    return f.guard([&] { return InitialLaw::gaussian(f["mean"].numbers(), f["cov"].matrix()); });
  }
  if (type == "point_mass") {
    f.object({"type", "location"});
    return f.guard([&] { return InitialLaw::point_mass(f["location"].numbers()); });
  }
  if (type == "uniform_box") {
    f.object({"type", "lower", "upper"});
    return f.guard([&] { return InitialLaw::uniform_box(f["lower"].numbers(), f["upper"].numbers()); });
  }
  f["type"].fail("unknown initial law '" + type + "'");
}

inline json to_json(const InitialLaw& law) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianInit>) {
          return {{"type", "gaussian"}, {"mean", p.mean}, {"cov", cfg::matrix_json(p.cov)}};
        } else if constexpr (std::is_same_v<T, PointMassInit>) {
          return {{"type", "point_mass"}, {"location", p.location}};
        } else {
          return {{"type", "uniform_box"}, {"lower", p.lower}, {"upper", p.upper}};
        }
      },
      law.payload());
}

// `dim` is the spatial dimension of the experiment; a closed-form limit
// without an explicit mean gets the oracle mean of `init` on `grid`.
inline DriftSpec drift_from_json(const cfg::Field& f, std::size_t dim, const TimeGrid& grid, const InitialLaw& init) {
  const std::string type = f["type"].string();
  auto check_dim = [&](const DriftSpec& d) {
    if (d.dim() != dim) f.fail("drift dimension " + std::to_string(d.dim()) + " does not match the initial law (" + std::to_string(dim) + ")");
    return d;
  };
  if (type == "zero") {
    f.object({"type"});
    return DriftSpec::zero(dim);
  }
  if (type == "constant") {
    f.object({"type", "c"});
    return check_dim(f.guard([&] { return DriftSpec::constant(f["c"].numbers()); }));
  }
  if (type == "linear") {
    f.object({"type", "A"});
    const Eigen::MatrixXd A = f["A"].matrix();
    if (A.rows() != A.cols()) f["A"].fail("expected a square matrix");
    return check_dim(f.guard([&] { return DriftSpec::linear(A); }));
  }
  if (type == "linear_mean_field") {
    f.object({"type", "theta", "confinement"});
    return f.guard([&] { return DriftSpec::linear_mean_field(f["theta"].number(), f.number_or("confinement", 1.0), dim); });
  }
  if (type == "pairwise") {
    f.object({"type", "kernel", "confinement"});
    const cfg::Field k = f["kernel"];
    const std::string kt = k["type"].string();
    PairKernel kernel = PairKernel::linear(0.0);
    if (kt == "linear") {
      k.object({"type", "coefficient"});
      kernel = PairKernel::linear(k["coefficient"].number());
    } else if (kt == "tanh") {
      k.object({"type", "coefficient", "length"});
      kernel = k.guard([&] { return PairKernel::tanh(k["coefficient"].number(), k["length"].number()); });
    } else {
      k["type"].fail("unknown kernel '" + kt + "'");
    }
    Confinement conf = Confinement::none();
    if (f.has("confinement")) {
      const cfg::Field c = f["confinement"];
      const std::string ct = c["type"].string();
      if (ct == "none") {
        c.object({"type"});
      } else if (ct == "linear" || ct == "quartic") {
        c.object({"type", "coefficient"});
        conf = ct == "linear" ? Confinement::linear(c["coefficient"].number()) : Confinement::quartic(c["coefficient"].number());
      } else {
        c["type"].fail("unknown confinement '" + ct + "'");
      }
    }
    return f.guard([&] { return DriftSpec::pairwise(kernel, conf, dim); });
  }
  if (type == "closed_form_limit") {
    f.object({"type", "alpha", "beta", "mean"});
    const double alpha = f["alpha"].number(), beta = f["beta"].number();
    std::vector<std::vector<double>> mean;
    if (f.has("mean")) {
      const cfg::Field m = f["mean"];
      for (std::size_t i = 0; i < m.size(); ++i) mean.push_back(m[i].numbers());
    } else {
      mean = f.guard([&] { return oracle_limit_mean(alpha, beta, init, grid); });
    }
    return check_dim(f.guard([&] { return DriftSpec::closed_form_limit(alpha, beta, grid, std::move(mean)); }));
  }
  if (type == "tabulated") {
    f.object({"type", "grid", "times", "values", "clamp_outside"});
    TabulatedDrift t{cfg::parse_spatial_grid(f["grid"]), f["times"].numbers(), f["values"].numbers(),
                     f.boolean_or("clamp_outside", false)};
    return check_dim(f.guard([&] { return DriftSpec::tabulated(std::move(t), dim); }));
  }
  f["type"].fail("unknown drift type '" + type + "'");
}

inline json to_json(const DriftSpec& spec) {
  return std::visit(
      [&](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ZeroDrift>) {
          return {{"type", "zero"}};
        } else if constexpr (std::is_same_v<T, ConstantDrift>) {
          return {{"type", "constant"}, {"c", p.c}};
        } else if constexpr (std::is_same_v<T, LinearDrift>) {
          return {{"type", "linear"}, {"A", cfg::matrix_json(p.A)}};
        } else if constexpr (std::is_same_v<T, PairwiseMeanField>) {
          json k;
          switch (p.grad_kernel.kind()) {
            case PairKernel::Kind::kLinear: k = {{"type", "linear"}, {"coefficient", p.grad_kernel.coefficient()}}; break;
            case PairKernel::Kind::kTanh:
              k = {{"type", "tanh"}, {"coefficient", p.grad_kernel.coefficient()}, {"length", p.grad_kernel.length()}};
              break;
            default: throw ConfigError("custom pair kernels cannot be written to a config");
          }
          json c;
          switch (p.confinement.kind()) {
            case Confinement::Kind::kNone: c = {{"type", "none"}}; break;
            case Confinement::Kind::kLinear: c = {{"type", "linear"}, {"coefficient", p.confinement.coefficient()}}; break;
            case Confinement::Kind::kQuartic: c = {{"type", "quartic"}, {"coefficient", p.confinement.coefficient()}}; break;
            default: throw ConfigError("custom confinements cannot be written to a config");
          }
          return {{"type", "pairwise"}, {"kernel", k}, {"confinement", c}};
        } else if constexpr (std::is_same_v<T, ClosedFormLimit>) {
          return {{"type", "closed_form_limit"}, {"alpha", p.alpha}, {"beta", p.beta}, {"mean", p.mean}};
        } else {
          json axes = json::array();
          for (const auto& a : p.grid.axes()) axes.push_back({{"lo", a.lo}, {"hi", a.hi}, {"nodes", a.nodes}});
          return {{"type", "tabulated"},
                  {"grid", {{"axes", axes}}},
                  {"times", p.times},
                  {"values", p.values},
                  {"clamp_outside", p.clamp_outside}};
        }
      },
      spec.payload());
}

struct DensitySettings {
  double lo = -8.0;
  double hi = 8.0;
  std::size_t nodes = 801;
  double bandwidth = 0.0;  // 0: Silverman
  double epsilon = kDensityFloor;

  SpatialGrid grid() const { return SpatialGrid::line(lo, hi, nodes); }
};

struct DualitySettings {
  std::vector<double> times{0.25, 0.5, 0.75};
  std::size_t window = 200;
  double bin_lo = -2.0, bin_hi = 2.0;
  std::size_t bins = 4;
  std::size_t min_count = 50;
  double bandwidth = 0.1;
  double bulk_fraction = 0.01;
  double tolerance = 0.1;
};

struct ReversalSettings {
  std::vector<double> times{0.25, 0.5, 0.75};
  std::size_t replicas = 20000;
  double bandwidth = 0.1;
  std::size_t tab_stride = 10;
  double reliable_fraction = 1e-3;
  double min_coverage = 0.99;
  double tolerance = 0.05;
};

struct ChaosSettings {
  std::vector<double> tv_times{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> kac_times{0.5, 0.75, 1.0};
  std::size_t kac_k = 2;
  std::size_t limit_particles = 0;
  std::optional<double> expected_slope;
  double slope_tolerance = 0.15;
  double oracle_tolerance = 0.1;
  double final_gap_tolerance = 0.05;
};

struct EntropySettings {
  std::vector<double> times;  // empty: 0, T/2, T
  std::size_t kinetic_stride = 10;
};

struct ContinuitySettings {
  double r0 = 5.0, r1 = 7.0;
  std::size_t stride = 10;
  double tolerance = 0.03;
};

struct ExperimentConfig {
  DriftSpec model = DriftSpec::zero(1);
  std::optional<DriftSpec> limit_model;
  InitialLaw init = InitialLaw::point_mass({0.0});
  TimeGrid grid{1.0, 1};
  std::vector<std::size_t> N_sweep{1};
  std::size_t replicas = 100;
  std::uint64_t seed = 0;
  double kappa = 0.5;
  DensitySettings density;
  std::vector<std::string> checks;
  std::string output = "out";

  // settings under "options"
  std::size_t chunk = 250;
  bool write_paths = false;
  DualitySettings duality;
  ReversalSettings reversal;
  ChaosSettings chaos;
  EntropySettings entropy;
  ContinuitySettings continuity;

  json source;  // the parsed document, seed override applied

  bool wants(const std::string& check) const { return std::find(checks.begin(), checks.end(), check) != checks.end(); }

  // FNV-1a of the canonical document without the output directory.
  std::string hash() const {
    json j = source;
    j.erase("output");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(j.dump())));
    return buf;
  }
};

namespace cfg {

inline void parse_options(const Field& f, ExperimentConfig& c) {
  f.object({"chunk", "write_paths", "duality", "reversal", "chaos", "entropy", "continuity"});
  c.chunk = f.count_or("chunk", c.chunk);
  if (c.chunk == 0) f["chunk"].fail("must be positive");
  c.write_paths = f.boolean_or("write_paths", false);
  if (f.has("duality")) {
    const Field d = f["duality"];
    d.object({"times", "window", "bins", "bandwidth", "bulk_fraction", "tolerance"});
    auto& s = c.duality;
    if (d.has("times")) s.times = d["times"].numbers();
    s.window = d.count_or("window", s.window);
    if (d.has("bins")) {
      const Field b = d["bins"];
      b.object({"lo", "hi", "count", "min_count"});
      s.bin_lo = b["lo"].number();
      s.bin_hi = b["hi"].number();
      s.bins = b["count"].count();
      s.min_count = b.count_or("min_count", s.min_count);
      if (!(s.bin_hi > s.bin_lo) || s.bins == 0) b.fail("need lo < hi and count >= 1");
    }
    s.bandwidth = d.number_or("bandwidth", s.bandwidth);
    s.bulk_fraction = d.number_or("bulk_fraction", s.bulk_fraction);
    s.tolerance = d.number_or("tolerance", s.tolerance);
  }
  if (f.has("reversal")) {
    const Field r = f["reversal"];
    r.object({"times", "replicas", "bandwidth", "tab_stride", "reliable_fraction", "min_coverage", "tolerance"});
    auto& s = c.reversal;
    if (r.has("times")) s.times = r["times"].numbers();
    s.replicas = r.count_or("replicas", s.replicas);
    s.bandwidth = r.number_or("bandwidth", s.bandwidth);
    s.tab_stride = r.count_or("tab_stride", s.tab_stride);
    s.reliable_fraction = r.number_or("reliable_fraction", s.reliable_fraction);
    s.min_coverage = r.number_or("min_coverage", s.min_coverage);
    s.tolerance = r.number_or("tolerance", s.tolerance);
    if (s.replicas == 0) r["replicas"].fail("must be positive");
  }
  if (f.has("chaos")) {
    const Field h = f["chaos"];
    h.object({"tv_times", "kac_times", "kac_k", "limit_particles", "expected_slope", "slope_tolerance", "oracle_tolerance",
              "final_gap_tolerance"});
    auto& s = c.chaos;
    if (h.has("tv_times")) s.tv_times = h["tv_times"].numbers();
    if (h.has("kac_times")) s.kac_times = h["kac_times"].numbers();
    s.kac_k = h.count_or("kac_k", s.kac_k);
    if (s.kac_k < 1 || s.kac_k > 3) h["kac_k"].fail("must be 1, 2 or 3");
    s.limit_particles = h.count_or("limit_particles", s.limit_particles);
    if (h.has("expected_slope")) s.expected_slope = h["expected_slope"].number();
    s.slope_tolerance = h.number_or("slope_tolerance", s.slope_tolerance);
    s.oracle_tolerance = h.number_or("oracle_tolerance", s.oracle_tolerance);
    s.final_gap_tolerance = h.number_or("final_gap_tolerance", s.final_gap_tolerance);
  }
  if (f.has("entropy")) {
    const Field e = f["entropy"];
    e.object({"times", "kinetic_stride"});
    if (e.has("times")) c.entropy.times = e["times"].numbers();
    c.entropy.kinetic_stride = e.count_or("kinetic_stride", c.entropy.kinetic_stride);
    if (c.entropy.kinetic_stride == 0) e["kinetic_stride"].fail("must be positive");
  }
  if (f.has("continuity")) {
    const Field k = f["continuity"];
    k.object({"r0", "r1", "stride", "tolerance"});
    auto& s = c.continuity;
    s.r0 = k.number_or("r0", s.r0);
    s.r1 = k.number_or("r1", s.r1);
    s.stride = k.count_or("stride", s.stride);
    s.tolerance = k.number_or("tolerance", s.tolerance);
    if (!(s.r1 > s.r0) || s.r0 <= 0.0) k.fail("need 0 < r0 < r1");
    if (s.stride == 0) k["stride"].fail("must be positive");
  }
}

// Every requested time must be a node of the grid.
inline void require_nodes(const TimeGrid& g, const std::vector<double>& times, const std::string& path, bool interior) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (t < 0.0 || t > g.horizon()) throw ConfigError(p + ": outside [0, T]");
    const std::size_t k = g.node_near(t);
    if (std::abs(g.time(k) - t) > 1e-9 * (1.0 + g.horizon())) throw ConfigError(p + ": not a time-grid node");
    if (interior && (k == 0 || k == g.n_steps())) throw ConfigError(p + ": must be interior to (0, T)");
  }
}

}  // namespace cfg

inline ExperimentConfig parse_config(const json& doc, std::optional<std::uint64_t> seed_override = std::nullopt) {
  using cfg::Field;
  ExperimentConfig c;
  c.source = doc;
  if (seed_override) c.source["seed"] = *seed_override;
  const Field root(c.source, "");
  if (!c.source.is_object()) throw ConfigError("config: expected a JSON object");
  root.object({"model", "limit_model", "init", "grid", "N_sweep", "replicas", "seed", "kappa", "density", "checks", "output",
               "options"});

  const Field g = root["grid"];
  g.object({"T", "n_steps"});
  c.grid = g.guard([&] { return TimeGrid(g["T"].number(), g["n_steps"].count()); });
  c.init = initial_law_from_json(root["init"]);
  const std::size_t d = c.init.dim();
  c.model = drift_from_json(root["model"], d, c.grid, c.init);
  if (root.has("limit_model")) {
    c.limit_model = drift_from_json(root["limit_model"], d, c.grid, c.init);
    if (!c.limit_model->is_single_particle()) root["limit_model"].fail("the limit drift must act on one particle");
  }

  c.N_sweep = root["N_sweep"].counts();
  if (c.N_sweep.empty()) root["N_sweep"].fail("must not be empty");
  for (std::size_t i = 0; i < c.N_sweep.size(); ++i) {
    if (c.N_sweep[i] == 0) root["N_sweep"][i].fail("must be positive");
    if (i > 0 && c.N_sweep[i] <= c.N_sweep[i - 1]) throw ConfigError("N_sweep: not increasing");
  }
  c.replicas = root["replicas"].count();
  if (c.replicas == 0) root["replicas"].fail("must be positive");
  c.seed = root["seed"].count();
  c.kappa = root["kappa"].number();
  if (c.kappa != 1.0 && c.kappa != 0.5) root["kappa"].fail("must be 1 or 0.5");

  if (root.has("density")) {
    const Field f = root["density"];
    f.object({"lo", "hi", "nodes", "bandwidth", "epsilon"});
    auto& s = c.density;
    s.lo = f.number_or("lo", s.lo);
    s.hi = f.number_or("hi", s.hi);
    s.nodes = f.count_or("nodes", s.nodes);
    s.bandwidth = f.number_or("bandwidth", s.bandwidth);
    s.epsilon = f.number_or("epsilon", s.epsilon);
    if (!(s.hi > s.lo) || s.nodes < 2) f.fail("need lo < hi and at least 2 nodes");
    if (s.bandwidth < 0.0) f["bandwidth"].fail("must be non-negative");
    if (!(s.epsilon > 0.0)) f["epsilon"].fail("must be positive");
  }

  const Field checks = root["checks"];
  std::set<std::string> seen;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const std::string name = checks[i].string();
    const auto& k = known_checks();
    if (std::find(k.begin(), k.end(), name) == k.end()) checks[i].fail("unknown check '" + name + "'");
    if (!seen.insert(name).second) checks[i].fail("duplicate check '" + name + "'");
    c.checks.push_back(name);
  }
  if (c.checks.empty()) checks.fail("must name at least one check");
  c.output = root.has("output") ? root["output"].string() : std::string("out");
  if (root.has("options")) cfg::parse_options(root["options"], c);

  const bool entropy_check = std::any_of(c.checks.begin(), c.checks.end(), [](const std::string& s) { return s != "oracle-validate"; });
  if (entropy_check && c.replicas < 100) root["replicas"].fail("must be at least 100 for entropy checks");
  if (c.wants("chaos-sweep") && !c.limit_model) throw ConfigError("limit_model: required by chaos-sweep");
  if (c.wants("chaos-sweep")) {
    cfg::require_nodes(c.grid, c.chaos.tv_times, "options.chaos.tv_times", false);
    cfg::require_nodes(c.grid, c.chaos.kac_times, "options.chaos.kac_times", false);
  }
  for (const char* one_d : {"reversal-check", "continuity-check"}) {
    if (c.wants(one_d) && (!c.model.is_single_particle() || d != 1)) {
      throw ConfigError(std::string("model: ") + one_d + " needs a single-particle drift in one dimension");
    }
  }
  if (c.wants("reversal-check")) {
    cfg::require_nodes(c.grid, c.duality.times, "options.duality.times", true);
    cfg::require_nodes(c.grid, c.reversal.times, "options.reversal.times", true);
  }
  if (c.wants("entropy-report")) cfg::require_nodes(c.grid, c.entropy.times, "options.entropy.times", false);
  if (d != 1 && (c.wants("entropy-report") || c.wants("continuity-check"))) {
    root["init"].fail("density checks run in one dimension");
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& file, std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream is(file);
  if (!is) throw ConfigError(file + ": cannot open");
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(file + ": " + e.what());
  }
  return parse_config(doc, seed_override);
}

}  // namespace chaosbench
