#pragma once

// Runs the checks named in an experiment config, writes CSV reports and
// manifest.json into the output directory, and aggregates an exit code.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chaosbench/chaos.hpp"
#include "chaosbench/config.hpp"
#include "chaosbench/csv.hpp"
#include "chaosbench/density.hpp"
#include "chaosbench/entropy.hpp"
#include "chaosbench/oracle.hpp"
#include "chaosbench/path_ensemble.hpp"
#include "chaosbench/reversal.hpp"
#include "chaosbench/sde_engine.hpp"

namespace chaosbench {

inline constexpr const char* kVersion = "0.1.0";

struct CheckResult {
  std::string name;
  std::string status = "pass";  // pass, fail or error
  std::string message;
  std::vector<std::string> artifacts;
  json details = json::object();
  double seconds = 0.0;  // wall clock, kept out of the manifest

  bool ok() const { return status == "pass"; }
  void require(bool cond, const std::string& what) {
    if (!cond) {
      status = "fail";
      message += (message.empty() ? "" : "; ") + what;
    }
  }
};

struct RunResult {
  int exit_code = 0;
  std::string config_hash;
  std::vector<CheckResult> checks;
  json manifest;

  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string time_tag(double t) { return "t" + fmt_num(t); }

inline std::vector<std::size_t> nodes_of(const TimeGrid& g, const std::vector<double>& times) {
  std::vector<std::size_t> out;
  for (double t : times) out.push_back(g.node_near(t));
  return out;
}

}  // namespace detail

class Runner {
 public:
  Runner(ExperimentConfig config, std::string out_dir, unsigned jobs)
      : c_(std::move(config)), out_(std::move(out_dir)), jobs_(std::max(1u, jobs)), hash_(c_.hash()) {}

  RunResult run() {
    std::filesystem::create_directories(out_);
    RunResult res;
    res.config_hash = hash_;
    for (const auto& name : known_checks()) {
      if (!c_.wants(name)) continue;
      CheckResult r;
      r.name = name;
      const auto start = std::chrono::steady_clock::now();
      try {
        if (name == "oracle-validate") oracle_validate(r);
        if (name == "entropy-report") entropy_report(r);
        if (name == "continuity-check") continuity_check(r);
        if (name == "reversal-check") reversal_check(r);
        if (name == "chaos-sweep") chaos_sweep(r);
      } catch (const std::exception& e) {
        r.status = "error";
        r.message = e.what();
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!r.ok()) res.exit_code = 1;
      res.checks.push_back(std::move(r));
      write_manifest(res);  // partial runs still leave a manifest
    }
    return res;
  }

 private:
  std::uint64_t job_seed(const std::string& job) const { return derive_seed(c_.seed, hash_name(job)); }
  std::string path(const std::string& file) const { return (std::filesystem::path(out_) / file).string(); }

  void save(CheckResult& r, const CsvTable& t, const std::string& file) {
    t.save(path(file));
    r.artifacts.push_back(file);
  }

  SimulationOptions sim() const {
    SimulationOptions o;
    o.threads = jobs_;
    return o;
  }

  void write_manifest(RunResult& res) const {
    json m;
    m["config_hash"] = hash_;
    m["seed"] = c_.seed;
    m["timestamp"] = detail::utc_timestamp();
    m["versions"] = {{"chaosbench", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__},
                     {"kac_dictionary", KacDictionary::kVersion},
                     {"rng", "philox4x32-10"}};
    m["kappa"] = c_.kappa;
    m["config"] = c_.source;
    json checks = json::array();
    for (const auto& r : res.checks) {
      checks.push_back({{"name", r.name}, {"status", r.status}, {"message", r.message}, {"artifacts", r.artifacts}, {"details", r.details}});
      if (r.name == "oracle-validate" && r.details.contains("convention")) m["convention"] = r.details["convention"];
    }
    m["checks"] = checks;
    m["exit_code"] = res.exit_code;
    res.manifest = m;
    std::ofstream os(path("manifest.json"));
    os << m.dump(2) << '\n';
  }

  // -------------------------------------------------------------------------

  void oracle_validate(CheckResult& r) {
    const auto rep = validate_kappa_convention(0.02);
    CsvTable t({"model", "truth", "kinetic", "energy", "h0", "hT", "kappa1_h0_minus_hT", "kappa1_hT_minus_h0",
                "kappa_half_h0_minus_hT", "kappa_half_hT_minus_h0"},
               hash_);
    for (const auto& cs : rep.cases) {
      t.row({cs.model, fmt_num(cs.truth), fmt_num(cs.kinetic), fmt_num(cs.energy), fmt_num(cs.h0), fmt_num(cs.hT),
             fmt_num(cs.candidate[0][0]), fmt_num(cs.candidate[0][1]), fmt_num(cs.candidate[1][0]),
             fmt_num(cs.candidate[1][1])});
    }
    save(r, t, "oracle_report.csv");
    r.details["convention"] = {{"resolved", rep.resolved},
                               {"kappa", rep.resolved ? json(rep.kappa) : json(nullptr)},
                               {"boundary", rep.boundary},
                               {"tolerance", rep.tolerance},
                               {"summary", rep.summary()}};
    r.require(rep.resolved, "no unique (kappa, boundary) pair matches the Gaussian oracle");
    if (rep.resolved && rep.kappa != c_.kappa) {
      r.details["warning"] = "config kappa " + fmt_num(c_.kappa) + " differs from the resolved " + fmt_num(rep.kappa);
    }
  }

  void entropy_report(CheckResult& r) {
    const TimeGrid& g = c_.grid;
    std::vector<double> times = c_.entropy.times;
    if (times.empty()) times = {0.0, g.time(g.n_steps() / 2), g.horizon()};
    if (!c_.init.has_density()) {
      // a point mass has no density at t = 0
      times.erase(std::remove_if(times.begin(), times.end(), [&](double t) { return g.node_near(t) == 0; }), times.end());
    }
    const auto report_nodes = detail::nodes_of(g, times);
    const SpatialGrid grid = c_.density.grid();
    const DriftSpec wiener = DriftSpec::zero(c_.model.dim());
    CsvTable t = entropy_csv_header(hash_);
    const bool kinetic = c_.model.is_single_particle() && c_.init.has_density();
    std::vector<std::size_t> kin_nodes;
    for (std::size_t k = 0; k <= g.n_steps(); k += c_.entropy.kinetic_stride) kin_nodes.push_back(k);
    if (kin_nodes.back() != g.n_steps()) kin_nodes.push_back(g.n_steps());

    bool finite = true;
    auto row = [&](const std::string& q, const EntropyValue& v) {
      entropy_csv_row(t, q, v);
      finite = finite && std::isfinite(v.value) && std::isfinite(v.stderr_);
    };
    for (std::size_t N : c_.N_sweep) {
      const std::string tag = "N=" + std::to_string(N);
      DriftEnergyAccumulator kl_w(c_.model, wiener);
      std::optional<DriftEnergyAccumulator> kl_l;
      if (c_.limit_model) kl_l.emplace(c_.model, *c_.limit_model);
      std::vector<DensityAccumulator> dens;
      for (std::size_t q = 0; q < report_nodes.size(); ++q) dens.emplace_back(grid, c_.density.bandwidth, c_.density.epsilon);
      const bool with_kinetic = kinetic && N == c_.N_sweep.front();
      std::vector<DensityAccumulator> kin;
      if (with_kinetic) {
        for (std::size_t q = 0; q < kin_nodes.size(); ++q) kin.emplace_back(grid, c_.density.bandwidth, c_.density.epsilon);
      }
      const std::size_t chunk = c_.write_paths ? c_.replicas : c_.chunk;
      simulate_in_chunks(c_.model, sampler_for(c_.init), c_.init.dim(), g, N, c_.replicas, job_seed("entropy-report"), chunk,
                         sim(), [&](const PathEnsemble& p) {
                           kl_w.add(p);
                           if (kl_l) kl_l->add(p);
                           for (std::size_t q = 0; q < report_nodes.size(); ++q) dens[q].add_node(p, report_nodes[q]);
                           for (std::size_t q = 0; q < kin.size(); ++q) kin[q].add_node(p, kin_nodes[q]);
                           if (c_.write_paths) {
                             const std::string f = "paths_N" + std::to_string(N) + ".bin";
                             path_io::write(p, path(f));
                             r.artifacts.push_back(f);
                           }
                         });
      const EntropyValue w = normalized_kl(kl_w.value(c_.kappa), N);
      row("kl_wiener_per_particle[" + tag + "]", w);
      if (kl_l) row("kl_limit_per_particle[" + tag + "]", normalized_kl(kl_l->value(c_.kappa), N));
      for (std::size_t q = 0; q < report_nodes.size(); ++q) {
        const auto d = dens[q].finalize();
        const std::string tt = tag + ";t=" + fmt_num(g.time(report_nodes[q]));
        row("boltzmann[" + tt + "]", boltzmann_entropy(d));
        row("fisher_u[" + tt + "]", fisher_information(d));
        save(r, density_csv(d, hash_), "density_N" + std::to_string(N) + "_" + detail::time_tag(g.time(report_nodes[q])) + ".csv");
      }
      if (with_kinetic) {
        std::vector<DensityEstimate> ds;
        std::vector<VelocityField> vs;
        std::vector<double> ts;
        for (std::size_t q = 0; q < kin.size(); ++q) {
          ds.push_back(kin[q].finalize());
          ts.push_back(g.time(kin_nodes[q]));
          vs.push_back(current_velocity(drift_field(c_.model, grid, ts.back()), ds.back()));
        }
        const auto ke = kinetic_energy_functional(ds, vs, ts);
        const double h0 = boltzmann_entropy(ds.front()).value, hT = boltzmann_entropy(ds.back()).value;
        const auto dec = entropy_decomposition(ke.total.value, h0, hT, c_.kappa);
        row("kinetic_osmotic[" + tag + "]", {ke.osmotic, Estimator::kPlugIn, 0.0, 1.0});
        row("kinetic_current[" + tag + "]", {ke.current, Estimator::kPlugIn, 0.0, 1.0});
        row("decomposition_h0_minus_hT[" + tag + "]", {dec.initial_minus_final, Estimator::kPlugIn, 0.0, c_.kappa});
        row("decomposition_hT_minus_h0[" + tag + "]", {dec.final_minus_initial, Estimator::kPlugIn, 0.0, c_.kappa});
        r.details["decomposition"] = {{"girsanov", w.value}, {"h0_minus_hT", dec.initial_minus_final}, {"hT_minus_h0", dec.final_minus_initial}};
      }
      save(r, t, "entropy_report.csv");
    }
    r.require(finite, "non-finite entropy value");
  }

  void continuity_check(CheckResult& r) {
    const TimeGrid& g = c_.grid;
    c_.init.require_density("continuity check");
    const SpatialGrid grid = c_.density.grid();
    std::vector<std::size_t> nodes;
    for (std::size_t k = 0; k <= g.n_steps(); k += c_.continuity.stride) nodes.push_back(k);
    if (nodes.back() != g.n_steps()) nodes.push_back(g.n_steps());
    std::vector<DensityAccumulator> acc;
    for (std::size_t q = 0; q < nodes.size(); ++q) acc.emplace_back(grid, c_.density.bandwidth, c_.density.epsilon);
    simulate_in_chunks(c_.model, sampler_for(c_.init), 1, g, 1, c_.replicas, job_seed("continuity-check"), c_.chunk, sim(),
                       [&](const PathEnsemble& p) {
                         for (std::size_t q = 0; q < nodes.size(); ++q) acc[q].add_node(p, nodes[q]);
                       });
    std::vector<DensityEstimate> ds;
    std::vector<VelocityField> vs;
    std::vector<double> ts;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      ds.push_back(acc[q].finalize());
      ts.push_back(g.time(nodes[q]));
      vs.push_back(current_velocity(drift_field(c_.model, grid, ts.back()), ds.back()));
    }
    const auto res = continuity_residual(ds, vs, ts, cutoff_quadratic(c_.continuity.r0, c_.continuity.r1));
    const double scale = std::abs(res.boundary) > 1e-12 ? std::abs(res.boundary) : 1.0;
    const double rel = res.residual / scale;
    CsvTable t({"boundary", "flux", "residual", "relative", "tolerance"}, hash_);
    t.row({fmt_num(res.boundary), fmt_num(res.flux), fmt_num(res.residual), fmt_num(rel), fmt_num(c_.continuity.tolerance)});
    save(r, t, "continuity_report.csv");
    r.details = {{"boundary", res.boundary}, {"flux", res.flux}, {"residual", res.residual}, {"relative", rel}};
    r.require(rel <= c_.continuity.tolerance, "continuity residual " + fmt_num(rel) + " above tolerance");
  }

  void reversal_check(CheckResult& r) {
    const TimeGrid& g = c_.grid;
    DualityOptions dop;
    dop.bins = Bins::line(c_.duality.bin_lo, c_.duality.bin_hi, c_.duality.bins, c_.duality.min_count);
    dop.window = c_.duality.window;
    dop.density_grid = c_.density.grid();
    dop.bandwidth = c_.duality.bandwidth;
    dop.bulk_fraction = c_.duality.bulk_fraction;
    DualityAccumulator dual(c_.model, g, detail::nodes_of(g, c_.duality.times), dop);
    ReversalOptions rop;
    rop.density_grid = c_.density.grid();
    rop.bandwidth = c_.reversal.bandwidth;
    rop.tab_stride = c_.reversal.tab_stride;
    rop.replicas = c_.reversal.replicas;
    rop.reliable_fraction = c_.reversal.reliable_fraction;
    rop.min_coverage = c_.reversal.min_coverage;
    rop.threads = jobs_;
    rop.seed = job_seed("reversal-check");
    ReversalAccumulator rev(c_.model, g, detail::nodes_of(g, c_.reversal.times), rop);
    simulate_in_chunks(c_.model, sampler_for(c_.init), 1, g, 1, c_.replicas, job_seed("reversal-check"), c_.chunk, sim(),
                       [&](const PathEnsemble& p) {
                         dual.add(p);
                         rev.add(p);
                       });
    const auto d = dual.finalize();
    save(r, d.csv(hash_), "duality_report.csv");
    r.details["duality"] = {{"sup", d.sup}, {"l2", d.l2}, {"bulk", d.bulk}};
    r.require(d.sup <= c_.duality.tolerance, "duality residual " + fmt_num(d.sup) + " above tolerance");

    const auto chk = rev.finalize();
    CsvTable t({"s", "tv", "kl", "slack", "cklp_holds", "min_coverage"}, hash_);
    double worst = 0.0;
    bool cklp = true;
    for (std::size_t i = 0; i < chk.times.size(); ++i) {
      t.row({fmt_num(chk.times[i]), fmt_num(chk.tv[i]), fmt_num(chk.pairs[i].kl), fmt_num(chk.pairs[i].slack),
             chk.pairs[i].holds ? "1" : "0", fmt_num(chk.min_coverage)});
      worst = std::max(worst, chk.tv[i]);
      cklp = cklp && chk.pairs[i].holds;
    }
    save(r, t, "reversal_report.csv");
    r.details["reversal"] = {{"max_tv", worst}, {"min_coverage", chk.min_coverage}, {"tv", chk.tv}};
    r.details["cklp_pairs"] = chk.pairs.size();
    r.details["cklp_violations"] = cklp ? 0 : 1;
    r.require(worst <= c_.reversal.tolerance, "reversed-marginal TV " + fmt_num(worst) + " above tolerance");
    r.require(cklp, "CKLP inequality violated");
  }

  void chaos_sweep(CheckResult& r) {
    ChaosSweepOptions o;
    o.N_sweep = c_.N_sweep;
    o.replicas = c_.replicas;
    o.chunk = c_.chunk;
    o.limit_particles = c_.chaos.limit_particles;
    o.seed = job_seed("chaos-sweep");
    o.kappa = c_.kappa;
    o.threads = jobs_;
    o.tv_times = c_.chaos.tv_times;
    o.kac_times = c_.chaos.kac_times;
    o.kac_k = c_.chaos.kac_k;
    o.density_grid = c_.density.grid();
    o.bandwidth = c_.density.bandwidth;
    auto rep = run_chaos_sweep(c_.model, *c_.limit_model, c_.init, c_.grid, o);
    const double tol = c_.chaos.oracle_tolerance;

    // closed forms exist for the linear mean-field model from a centered Gaussian start
    bool oracle = false;
    const auto lmf = linear_mean_field_params(c_.model);
    const auto* lim = std::get_if<ClosedFormLimit>(&c_.limit_model->payload());
    if (lmf && lim && c_.model.dim() == 1 && lim->alpha == -(lmf->first + lmf->second) && lim->beta == lmf->first) {
      try {
        for (auto& row : rep.rows) {
          row.strong_oracle = oracle_strong_chaos_value(lmf->first, row.N, c_.init, c_.grid, c_.kappa, lmf->second);
          row.weak_oracle = oracle_mean_field_weak_value(lmf->first, row.N, c_.init, c_.grid, c_.kappa, lmf->second);
        }
        rep.limit_oracle = oracle_path_relative_entropy(Eigen::MatrixXd::Constant(1, 1, lim->alpha), lim->beta, c_.init,
                                                        c_.grid, Eigen::MatrixXd::Zero(1, 1), 0.0, c_.kappa);
        oracle = true;
      } catch (const PreconditionFailure&) {
        oracle = false;
      }
    }
    save(r, rep.csv(hash_), "chaos_report.csv");
    CsvTable pairs({"label", "tv", "kl", "slack", "holds"}, hash_);
    std::size_t violations = 0;
    for (const auto& p : rep.pairs) {
      pairs.row({p.label, fmt_num(p.tv), fmt_num(p.kl), fmt_num(p.slack), p.holds ? "1" : "0"});
      violations += p.holds ? 0 : 1;
    }
    save(r, pairs, "cklp_pairs.csv");

    const auto& last = rep.rows.back();
    const double final_gap = std::abs(last.gap) / std::max(std::abs(rep.limit.value), 1e-300);
    std::size_t mono_bad = 0;
    bool strong_decreasing = true;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
      mono_bad += rep.rows[i].monotonicity.holds ? 0 : 1;
      if (i > 0) strong_decreasing = strong_decreasing && rep.rows[i].strong.value < rep.rows[i - 1].strong.value;
    }
    r.details = {{"slope", rep.slope.slope},
                 {"slope_ci", rep.slope.ci_half},
                 {"limit_entropy", rep.limit.value},
                 {"limit_oracle", rep.limit_oracle},
                 {"gap_decreasing", rep.gap_decreasing},
                 {"final_relative_gap", final_gap},
                 {"cklp_pairs", rep.pairs.size()},
                 {"cklp_violations", violations},
                 {"monotonicity_violations", mono_bad},
                 {"warnings", rep.warnings}};
    r.require(violations == 0, std::to_string(violations) + " CKLP violations");
    r.require(mono_bad == 0, std::to_string(mono_bad) + " monotonicity violations");
    r.require(strong_decreasing, "strong-chaos entropy not decreasing in N");
    r.require(rep.gap_decreasing, "weak-chaos gap not decreasing in N");
    r.require(final_gap <= c_.chaos.final_gap_tolerance, "final weak-chaos relative gap " + fmt_num(final_gap));
    if (c_.chaos.expected_slope) {
      r.require(std::abs(rep.slope.slope - *c_.chaos.expected_slope) <= c_.chaos.slope_tolerance,
                "strong-chaos slope " + fmt_num(rep.slope.slope) + " off target");
    }
    if (oracle) {
      for (const auto& row : rep.rows) {
        const std::string tag = " at N=" + std::to_string(row.N);
        r.require(std::abs(row.strong.value - row.strong_oracle) <= tol * row.strong_oracle, "strong chaos off the oracle" + tag);
        r.require(std::abs(row.kl_wiener.value - row.weak_oracle) <= tol * row.weak_oracle, "weak chaos off the oracle" + tag);
      }
      r.require(std::abs(rep.limit.value - rep.limit_oracle) <= tol * rep.limit_oracle, "limit entropy off the oracle");
    }
    const ChaosRow* first_kac = nullptr;
    for (const auto& row : rep.rows) {
      if (row.N >= 2 * c_.chaos.kac_k && !row.kac.empty() && !std::isnan(row.kac[0].distance)) {
        first_kac = &row;
        break;
      }
    }
    if (first_kac && first_kac != &last) {
      for (std::size_t q = 0; q < last.kac.size(); ++q) {
        r.require(last.kac[q].distance < first_kac->kac[q].distance, "Kac distance not decreasing at t=" + fmt_num(last.kac[q].t));
      }
    }
    r.details["oracle"] = oracle;
  }

  ExperimentConfig c_;
  std::string out_;
  unsigned jobs_;
  std::string hash_;
};

inline RunResult run_experiment(const ExperimentConfig& config, const std::string& out_dir, unsigned jobs = 1) {
  return Runner(config, out_dir, jobs).run();
}

// Canned configs behind the CLI aliases.
inline json canned_config(const std::string& name) {
  const json gauss1 = {{"type", "gaussian"}, {"mean", {0.0}}, {"cov", {{1.0}}}};
  if (name == "chaos-sweep") {
    return {{"model", {{"type", "linear_mean_field"}, {"theta", 0.5}, {"confinement", 1.0}}},
            {"limit_model", {{"type", "closed_form_limit"}, {"alpha", -1.5}, {"beta", 0.5}}},
            {"init", {{"type", "gaussian"}, {"mean", {0.0}}, {"cov", {{0.5}}}}},
            {"grid", {{"T", 1.0}, {"n_steps", 200}}},
            {"N_sweep", {2, 8, 32, 128}},
            {"replicas", 2000},
            {"seed", 20240601},
            {"kappa", 0.5},
            {"density", {{"lo", -6.0}, {"hi", 6.0}, {"nodes", 601}}},
            {"checks", {"chaos-sweep"}},
            {"output", "out/chaos-sweep"},
            {"options", {{"chaos", {{"expected_slope", -1.0}}}}}};
  }
  if (name == "reversal-check") {
    return {{"model", {{"type", "zero"}}},
            {"init", gauss1},
            {"grid", {{"T", 1.0}, {"n_steps", 1000}}},
            {"N_sweep", {1}},
            {"replicas", 100000},
            {"seed", 20240602},
            {"kappa", 0.5},
            {"checks", {"reversal-check"}},
            {"output", "out/reversal-check"},
            {"options", {{"chunk", 10000}}}};
  }
  if (name == "entropy-report" || name == "simulate") {
    json j = {{"model", {{"type", "linear"}, {"A", {{-1.0}}}}},
              {"limit_model", {{"type", "linear"}, {"A", {{-1.0}}}}},
              {"init", gauss1},
              {"grid", {{"T", 1.0}, {"n_steps", 200}}},
              {"N_sweep", {1}},
              {"replicas", 5000},
              {"seed", 20240603},
              {"kappa", 0.5},
              {"checks", {"entropy-report"}},
              {"output", "out/" + name}};
    if (name == "simulate") j["options"] = {{"write_paths", true}};
    return j;
  }
  if (name == "oracle-validate") {
    return {{"model", {{"type", "zero"}}},
            {"init", gauss1},
            {"grid", {{"T", 1.0}, {"n_steps", 100}}},
            {"N_sweep", {1}},
            {"replicas", 100},
            {"seed", 1},
            {"kappa", 0.5},
            {"checks", {"oracle-validate"}},
            {"output", "out/oracle-validate"}};
  }
  throw ConfigError("no canned config named '" + name + "'");
}

}  // namespace chaosbench
