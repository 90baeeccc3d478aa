#pragma once

// Uniform tensor-product spatial grids (1-d or 2-d) with trapezoidal weights
// and multilinear interpolation.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "chaosbench/error.hpp"

namespace chaosbench {

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t nodes = 2;

  double spacing() const { return (hi - lo) / static_cast<double>(nodes - 1); }
  double node(std::size_t i) const { return lo + spacing() * static_cast<double>(i); }
  bool contains(double x) const { return x >= lo && x <= hi; }

  void validate() const {
    if (!(hi > lo) || nodes < 2 || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError("axis requires lo < hi and at least 2 nodes");
    }
  }

  friend bool operator==(const Axis&, const Axis&) = default;
};

class SpatialGrid {
 public:
  SpatialGrid() = default;

  explicit SpatialGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty() || axes_.size() > 2) throw ConfigError("spatial grids support 1 or 2 dimensions");
    for (const auto& a : axes_) a.validate();
  }

  static SpatialGrid line(double lo, double hi, std::size_t nodes) { return SpatialGrid({Axis{lo, hi, nodes}}); }

  std::size_t dim() const { return axes_.size(); }
  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(std::size_t k) const { return axes_[k]; }

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes_) n *= a.nodes;
    return n;
  }

  // Flat index, last axis fastest.
  std::size_t index(std::size_t i, std::size_t j = 0) const { return dim() == 1 ? i : i * axes_[1].nodes + j; }

  std::array<std::size_t, 2> multi_index(std::size_t flat) const {
    if (dim() == 1) return {flat, 0};
    return {flat / axes_[1].nodes, flat % axes_[1].nodes};
  }

  void point(std::size_t flat, std::span<double> out) const {
    const auto mi = multi_index(flat);
    for (std::size_t k = 0; k < dim(); ++k) out[k] = axes_[k].node(mi[k]);
  }

  double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.spacing();
    return v;
  }

  // Trapezoidal quadrature weight of a node.
  double weight(std::size_t flat) const {
    const auto mi = multi_index(flat);
    double w = 1.0;
    for (std::size_t k = 0; k < dim(); ++k) {
      w *= axes_[k].spacing();
      if (mi[k] == 0 || mi[k] + 1 == axes_[k].nodes) w *= 0.5;
    }
    return w;
  }

  bool contains(std::span<const double> x) const {
    for (std::size_t k = 0; k < dim(); ++k) {
      if (!axes_[k].contains(x[k])) return false;
    }
    return true;
  }

  // Multilinear interpolation stencil: up to 4 (flat index, weight) pairs.
  // Coordinates outside the grid are clamped when `clamp` is set, otherwise
  // an ExtrapolationError is raised.
  struct Stencil {
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
    std::size_t count = 0;
  };

  Stencil stencil(std::span<const double> x, bool clamp = false) const {
    std::array<std::size_t, 2> base{};
    std::array<double, 2> frac{};
    for (std::size_t k = 0; k < dim(); ++k) {
      const Axis& a = axes_[k];
      double xk = x[k];
      if (!a.contains(xk)) {
        if (!clamp || std::isnan(xk)) throw ExtrapolationError("point outside tabulated grid");
        xk = xk < a.lo ? a.lo : a.hi;
      }
      double pos = (xk - a.lo) / a.spacing();
      auto i = static_cast<std::size_t>(std::floor(pos));
      if (i >= a.nodes - 1) i = a.nodes - 2;
      base[k] = i;
      frac[k] = pos - static_cast<double>(i);
    }
    Stencil s;
    if (dim() == 1) {
      s.index = {base[0], base[0] + 1, 0, 0};
      s.weight = {1.0 - frac[0], frac[0], 0.0, 0.0};
      s.count = 2;
    } else {
      const std::size_t i = base[0], j = base[1];
      s.index = {index(i, j), index(i, j + 1), index(i + 1, j), index(i + 1, j + 1)};
      s.weight = {(1 - frac[0]) * (1 - frac[1]), (1 - frac[0]) * frac[1], frac[0] * (1 - frac[1]),
                  frac[0] * frac[1]};
      s.count = 4;
    }
    return s;
  }

  friend bool operator==(const SpatialGrid&, const SpatialGrid&) = default;

 private:
  std::vector<Axis> axes_;
};

}  // namespace chaosbench
