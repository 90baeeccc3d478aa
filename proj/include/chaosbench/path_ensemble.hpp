#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chaosbench/error.hpp"
#include "chaosbench/models.hpp"

namespace chaosbench {

// Simulated trajectories indexed by (replica, recorded time node, particle,
// coordinate). An ensemble may hold a contiguous block of replicas
// [first_replica, first_replica + R) and a subset of the grid's time nodes.
class PathEnsemble {
 public:
  PathEnsemble() = default;

  PathEnsemble(std::size_t replicas, std::size_t particles, std::size_t dim, TimeGrid grid, std::uint64_t seed,
               std::string drift_id, std::vector<std::size_t> nodes, std::size_t first_replica = 0)
      : replicas_(replicas),
        particles_(particles),
        dim_(dim),
        grid_(grid),
        seed_(seed),
        drift_id_(std::move(drift_id)),
        first_replica_(first_replica),
        nodes_(std::move(nodes)) {
    if (!std::is_sorted(nodes_.begin(), nodes_.end()) ||
        std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end()) {
      throw InputError("path ensemble nodes must be strictly ascending");
    }
    if (!nodes_.empty() && nodes_.back() > grid_.n_steps()) throw InputError("path ensemble node beyond grid");
    values_.assign(replicas_ * nodes_.size() * particles_ * dim_, 0.0);
  }

  static std::vector<std::size_t> all_nodes(const TimeGrid& grid) {
    std::vector<std::size_t> n(grid.n_steps() + 1);
    for (std::size_t k = 0; k < n.size(); ++k) n[k] = k;
    return n;
  }

  std::size_t replicas() const { return replicas_; }
  std::size_t particles() const { return particles_; }
  std::size_t dim() const { return dim_; }
  const TimeGrid& grid() const { return grid_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& drift_id() const { return drift_id_; }
  std::size_t first_replica() const { return first_replica_; }
  const std::vector<std::size_t>& nodes() const { return nodes_; }
  std::size_t slots() const { return nodes_.size(); }
  bool reversed() const { return reversed_; }
  // Particle count of the ensemble this one was projected from (0 if not a projection).
  std::size_t marginal_source() const { return marginal_source_; }
  bool empty() const { return values_.empty(); }
  bool has_all_nodes() const { return nodes_.size() == grid_.n_steps() + 1; }

  std::optional<std::size_t> slot_of(std::size_t node) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end() || *it != node) return std::nullopt;
    return static_cast<std::size_t>(it - nodes_.begin());
  }

  std::size_t require_slot(std::size_t node) const {
    auto s = slot_of(node);
    if (!s) throw InputError("time node " + std::to_string(node) + " was not recorded");
    return *s;
  }

  std::size_t offset(std::size_t r, std::size_t slot, std::size_t i = 0, std::size_t c = 0) const {
    return ((r * nodes_.size() + slot) * particles_ + i) * dim_ + c;
  }

  double value(std::size_t r, std::size_t slot, std::size_t i, std::size_t c) const {
    return values_[offset(r, slot, i, c)];
  }

  // Full N x d configuration of replica r at a recorded slot.
  std::span<const double> state(std::size_t r, std::size_t slot) const {
    return {values_.data() + offset(r, slot), particles_ * dim_};
  }
  std::span<double> state(std::size_t r, std::size_t slot) { return {values_.data() + offset(r, slot), particles_ * dim_}; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  void set_reversed(bool r) { reversed_ = r; }
  void set_marginal_source(std::size_t n) { marginal_source_ = n; }
  void set_drift_id(std::string id) { drift_id_ = std::move(id); }

  friend bool operator==(const PathEnsemble&, const PathEnsemble&) = default;

 private:
  std::size_t replicas_ = 0;
  std::size_t particles_ = 0;
  std::size_t dim_ = 0;
  TimeGrid grid_;
  std::uint64_t seed_ = 0;
  std::string drift_id_;
  std::size_t first_replica_ = 0;
  std::vector<std::size_t> nodes_;
  bool reversed_ = false;
  std::size_t marginal_source_ = 0;
  std::vector<double> values_;
};

// Y(t) = X(T - t): node k of the result holds node n_steps - k of the input.
inline PathEnsemble reverse_paths(const PathEnsemble& paths) {
  const std::size_t n = paths.grid().n_steps();
  std::vector<std::size_t> nodes;
  nodes.reserve(paths.slots());
  for (auto it = paths.nodes().rbegin(); it != paths.nodes().rend(); ++it) nodes.push_back(n - *it);
  PathEnsemble out(paths.replicas(), paths.particles(), paths.dim(), paths.grid(), paths.seed(), paths.drift_id(),
                   std::move(nodes), paths.first_replica());
  out.set_reversed(!paths.reversed());
  out.set_marginal_source(paths.marginal_source());
  const std::size_t S = paths.slots();
  for (std::size_t r = 0; r < paths.replicas(); ++r) {
    for (std::size_t s = 0; s < S; ++s) {
      auto src = paths.state(r, S - 1 - s);
      std::copy(src.begin(), src.end(), out.state(r, s).begin());
    }
  }
  return out;
}

// Binary layout: 64-byte header (magic, version, R, N, d, n_steps, T, seed as
// little-endian 64-bit words) followed by float64 values in (replica, time,
// particle, coordinate) order.
namespace path_io {

inline constexpr std::uint64_t kMagic = 0x3145505341484343ULL;  // "CCHASPE1" read as little-endian bytes
inline constexpr std::uint64_t kVersion = 1;

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw InputError("path file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write(const PathEnsemble& paths, const std::string& file) {
  if (!paths.has_all_nodes()) throw InputError("only ensembles recorded at every time node can be written");
  std::ofstream os(file, std::ios::binary);
  if (!os) throw InputError("cannot open " + file + " for writing");
  detail::put_u64(os, kMagic);
  detail::put_u64(os, kVersion);
  detail::put_u64(os, paths.replicas());
  detail::put_u64(os, paths.particles());
  detail::put_u64(os, paths.dim());
  detail::put_u64(os, paths.grid().n_steps());
  detail::put_u64(os, std::bit_cast<std::uint64_t>(paths.grid().horizon()));
  detail::put_u64(os, paths.seed());
  for (double v : paths.values()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw InputError("failed writing " + file);
}

inline PathEnsemble read(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw InputError("cannot open " + file);
  if (detail::get_u64(is) != kMagic) throw InputError(file + ": not a path ensemble file");
  if (detail::get_u64(is) != kVersion) throw InputError(file + ": unsupported version");
  const auto R = detail::get_u64(is);
  const auto N = detail::get_u64(is);
  const auto d = detail::get_u64(is);
  const auto n_steps = detail::get_u64(is);
  const double T = std::bit_cast<double>(detail::get_u64(is));
  const auto seed = detail::get_u64(is);
  TimeGrid grid(T, n_steps);
  PathEnsemble paths(R, N, d, grid, seed, "file:" + file, PathEnsemble::all_nodes(grid));
  for (double& v : paths.values()) v = std::bit_cast<double>(detail::get_u64(is));
  return paths;
}

}  // namespace path_io

}  // namespace chaosbench
