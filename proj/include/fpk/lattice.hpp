// Copyright 2026 The fpk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Bounded regular lattices, multilinear (Q1) hat functions, interpolation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>

#include "fpk/common.hpp"

namespace fpk {

using MultiIndex = std::array<std::size_t, kMaxDim>;

/// Regular lattice on the box [lo, hi] (1D interval or 2D rectangle) with a
/// single spacing rho on every axis. Nodes are stored flat in row-major
/// order: axis 0 varies slowest.
class GridSpec {
 public:
  GridSpec() = default;

  static GridSpec box(std::size_t dim, const Point& lo, const Point& hi,
                      double rho) {
    if (dim < 1 || dim > kMaxDim) {
      throw ConfigError("grid dimension must be 1 or 2, got " +
                        std::to_string(dim));
    }
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      throw ConfigError("grid spacing must be positive and finite");
    }
    GridSpec g;
    g.dim_ = dim;
    g.rho_ = rho;
    for (std::size_t a = 0; a < dim; ++a) {
      const double cells = (hi[a] - lo[a]) / rho;
      const double rounded = std::round(cells);
      if (!std::isfinite(cells) || rounded < 2.0 ||
          std::abs(cells - rounded) > 1e-9 * rounded) {
        std::ostringstream msg;
        msg << "axis " << a << ": (hi - lo) / rho = " << cells
            << " is not an integer >= 2";
        throw ConfigError(msg.str());
      }
      g.lo_[a] = lo[a];
      g.hi_[a] = hi[a];
      g.nodes_[a] = static_cast<std::size_t>(rounded) + 1;
    }
    g.size_ = 1;
    for (std::size_t a = 0; a < dim; ++a) g.size_ *= g.nodes_[a];
    return g;
  }

  static GridSpec interval(double lo, double hi, double rho) {
    return box(1, {lo, 0.0}, {hi, 0.0}, rho);
  }

  /// The square [lo, hi]^2.
  static GridSpec square(double lo, double hi, double rho) {
    return box(2, {lo, lo}, {hi, hi}, rho);
  }

  std::size_t dim() const { return dim_; }
  double rho() const { return rho_; }
  double lo(std::size_t axis) const { return lo_[axis]; }
  double hi(std::size_t axis) const { return hi_[axis]; }
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  std::size_t nodes(std::size_t axis) const { return nodes_[axis]; }
  std::size_t size() const { return size_; }

  /// rho^d, the volume of an interior cell.
  double cell_volume() const { return std::pow(rho_, static_cast<int>(dim_)); }

  /// Volume of the cell E_i clipped to the box: boundary nodes own half
  /// cells, 2D corners quarter cells.
  double cell_volume(std::size_t flat_index) const {
    const MultiIndex idx = multi(flat_index);
    double vol = 1.0;
    for (std::size_t a = 0; a < dim_; ++a) {
      const bool edge = idx[a] == 0 || idx[a] + 1 == nodes_[a];
      vol *= edge ? 0.5 * rho_ : rho_;
    }
    return vol;
  }

  /// Coordinate of node `index` on `axis`. Written as a convex combination
  /// of the endpoints so that nodes of a box symmetric about zero are exact
  /// negatives of their mirror nodes.
  double coord(std::size_t axis, std::size_t index) const {
    const double n = static_cast<double>(nodes_[axis] - 1);
    const double i = static_cast<double>(index);
    return (lo_[axis] * (n - i) + hi_[axis] * i) / n;
  }

  Point coord(std::size_t flat_index) const {
    const MultiIndex idx = multi(flat_index);
    Point x{};
    for (std::size_t a = 0; a < dim_; ++a) x[a] = coord(a, idx[a]);
    return x;
  }

  std::size_t flat(const MultiIndex& idx) const {
    return dim_ == 1 ? idx[0] : idx[0] * nodes_[1] + idx[1];
  }

  MultiIndex multi(std::size_t flat_index) const {
    if (dim_ == 1) return {flat_index, 0};
    return {flat_index / nodes_[1], flat_index % nodes_[1]};
  }

  /// Index of the node reflected through the centre of the box.
  std::size_t mirror(std::size_t flat_index) const {
    MultiIndex idx = multi(flat_index);
    for (std::size_t a = 0; a < dim_; ++a) idx[a] = nodes_[a] - 1 - idx[a];
    return flat(idx);
  }

  /// Componentwise clamp onto the box.
  Point clamp(const Point& x) const {
    Point y = x;
    for (std::size_t a = 0; a < dim_; ++a) {
      y[a] = std::clamp(x[a], lo_[a], hi_[a]);
    }
    return y;
  }

  bool contains(const Point& x, double slack = 0.0) const {
    for (std::size_t a = 0; a < dim_; ++a) {
      if (!(x[a] >= lo_[a] - slack && x[a] <= hi_[a] + slack)) return false;
    }
    return true;
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    if (a.dim_ != b.dim_ || a.rho_ != b.rho_) return false;
    for (std::size_t i = 0; i < a.dim_; ++i) {
      if (a.lo_[i] != b.lo_[i] || a.hi_[i] != b.hi_[i]) return false;
    }
    return true;
  }

 private:
  std::size_t dim_ = 0;
  double rho_ = 0.0;
  Point lo_{};
  Point hi_{};
  MultiIndex nodes_{};
  std::size_t size_ = 0;
};

struct NodeWeight {
  std::size_t node;
  double weight;
};

/// Nonzero Q1 basis values at a point: at most 2^d (node, weight) pairs.
class BasisWeights {
 public:
  void push(std::size_t node, double weight) { items_[count_++] = {node, weight}; }
  std::size_t size() const { return count_; }
  const NodeWeight* begin() const { return items_.data(); }
  const NodeWeight* end() const { return items_.data() + count_; }
  const NodeWeight& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::array<NodeWeight, 1u << kMaxDim> items_{};
  std::size_t count_ = 0;
};

namespace detail {

// Snapping radius, in cell units, under which a coordinate is treated as
// lying exactly on a node.
inline constexpr double kNodeSnap = 1e-10;

struct AxisBracket {
  std::size_t cell;  // left node of the bracketing cell
  double frac;       // position inside the cell, in [0, 1]
};

inline AxisBracket bracket(const GridSpec& g, std::size_t axis, double x) {
  const std::size_t last = g.nodes(axis) - 1;
  double t = (x - g.lo(axis)) / g.rho();
  t = std::clamp(t, 0.0, static_cast<double>(last));
  // t >= 0 here, so truncation is floor.
  const auto nearest = static_cast<double>(static_cast<std::size_t>(t + 0.5));
  if (std::abs(t - nearest) <= kNodeSnap) t = nearest;
  std::size_t cell = static_cast<std::size_t>(t);
  if (cell >= last) cell = last - 1;
  double frac = t - static_cast<double>(cell);
  frac = std::clamp(frac, 0.0, 1.0);
  return {cell, frac};
}

}  // namespace detail

/// Multilinear hat-function weights beta_i(x). Points up to 1e-9 * rho
/// outside the box are snapped onto it; anything further is a DomainError.
inline BasisWeights basis_weights(const GridSpec& g, const Point& x) {
  if (!g.contains(x, 1e-9 * g.rho())) {
    std::ostringstream msg;
    msg << "basis_weights: point (" << x[0];
    if (g.dim() > 1) msg << ", " << x[1];
    msg << ") lies outside the grid box";
    throw DomainError(msg.str());
  }
  BasisWeights out;
  const detail::AxisBracket b0 = detail::bracket(g, 0, x[0]);
  const std::array<double, 2> w0{1.0 - b0.frac, b0.frac};
  if (g.dim() == 1) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (w0[s] != 0.0) out.push(b0.cell + s, w0[s]);
    }
    return out;
  }
  const detail::AxisBracket b1 = detail::bracket(g, 1, x[1]);
  const std::array<double, 2> w1{1.0 - b1.frac, b1.frac};
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t t = 0; t < 2; ++t) {
      const double w = w0[s] * w1[t];
      if (w != 0.0) out.push(g.flat({b0.cell + s, b1.cell + t}), w);
    }
  }
  return out;
}

/// Q1 interpolant at a point already known to lie in the box (for instance
/// the output of GridSpec::clamp). Same arithmetic as basis_weights.
inline double interpolate_inside(const GridSpec& g, std::span<const double> values,
                                 const Point& x) {
  const detail::AxisBracket b0 = detail::bracket(g, 0, x[0]);
  if (g.dim() == 1) {
    double sum = 0.0;
    if (b0.frac != 1.0) sum += (1.0 - b0.frac) * values[b0.cell];
    if (b0.frac != 0.0) sum += b0.frac * values[b0.cell + 1];
    return sum;
  }
  double sum = 0.0;
  for (const NodeWeight& nw : basis_weights(g, x)) sum += nw.weight * values[nw.node];
  return sum;
}

/// Q1 interpolant of per-node values evaluated at x.
inline double interpolate(const GridSpec& g, std::span<const double> values,
                          const Point& x) {
  if (values.size() != g.size()) throw DomainError("interpolate: one value per node expected");
  double sum = 0.0;
  for (const NodeWeight& nw : basis_weights(g, x)) {
    sum += nw.weight * values[nw.node];
  }
  return sum;
}

}  // namespace fpk
