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

// Backward semi-Lagrangian dynamic programming for the value function of
//   inf_alpha E int_t^T (|alpha|^2 / 2 + cost(X_s, s)) ds,
//   dX = alpha ds + sqrt(2 nu) dW,
// on a bounded box with projected characteristics, and the mollified
// feedback drift b = -grad (phi_eps * v).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include "fpk/common.hpp"
#include "fpk/lattice.hpp"
#include "fpk/measure.hpp"

namespace fpk {

/// Finite control set, symmetric under negation and containing 0. Controls
/// are kept ordered by |alpha|, then lexicographically, which is the
/// tie-break order of the minimization.
class ControlGrid {
 public:
  /// Tensor grid of {-K da, ..., 0, ..., K da} per axis, K = floor(max / da).
  ControlGrid(std::size_t dim, double max_speed, double spacing) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("control dimension must be 1 or 2");
    if (!(spacing > 0.0) || !(max_speed >= 0.0)) {
      throw ConfigError("control grid needs spacing > 0 and max speed >= 0");
    }
    const auto half = static_cast<long>(std::floor(max_speed / spacing + 1e-9));
    std::vector<double> axis;
    for (long i = -half; i <= half; ++i) axis.push_back(static_cast<double>(i) * spacing);
    build(axis);
  }

  /// Tensor grid over explicit per-axis values.
  static ControlGrid from_axis_values(std::size_t dim, std::vector<double> axis) {
    ControlGrid c;
    c.dim_ = dim;
    if (dim < 1 || dim > kMaxDim) throw ConfigError("control dimension must be 1 or 2");
    if (axis.empty()) throw ConfigError("control grid is empty");
    std::sort(axis.begin(), axis.end());
    for (std::size_t i = 0; i < axis.size(); ++i) {
      if (axis[i] != -axis[axis.size() - 1 - i]) {
        throw ConfigError("control values must be symmetric under negation");
      }
    }
    if (std::find(axis.begin(), axis.end(), 0.0) == axis.end()) {
      throw ConfigError("control values must contain 0");
    }
    c.build(axis);
    return c;
  }

  /// Default set for a grid: max speed = width / (2 max(h, sqrt h)) capped
  /// at `cap`, spacing `spacing`.
  static ControlGrid for_grid(const GridSpec& g, double h, double cap = 5.0,
                              double spacing = 0.125) {
    double width = 0.0;
    for (std::size_t a = 0; a < g.dim(); ++a) width = std::max(width, g.hi(a) - g.lo(a));
    const double speed = std::min(cap, width / (2.0 * std::max(h, std::sqrt(h))));
    return ControlGrid(g.dim(), speed, spacing);
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return controls_.size(); }
  bool empty() const { return controls_.empty(); }
  const std::vector<Point>& controls() const { return controls_; }
  const Point& operator[](std::size_t i) const { return controls_[i]; }

 private:
  ControlGrid() = default;

  void build(const std::vector<double>& axis) {
    controls_.clear();
    if (dim_ == 1) {
      for (double a : axis) controls_.push_back({a, 0.0});
    } else {
      for (double a : axis) {
        for (double b : axis) controls_.push_back({a, b});
      }
    }
    std::stable_sort(controls_.begin(), controls_.end(), [](const Point& p, const Point& q) {
      const double np = dot(p, p);
      const double nq = dot(q, q);
      if (np != nq) return np < nq;
      return p < q;
    });
  }

  std::size_t dim_ = 0;
  std::vector<Point> controls_;
};

/// Value function samples v_{i,k} for k = 0..N_T and the minimizing control
/// index at each (node, k < N_T).
struct ValueField {
  GridSpec grid;
  double h = 0.0;
  std::vector<std::vector<double>> values;       // [k][node]
  std::vector<std::vector<std::size_t>> policy;  // [k][node], k < N_T

  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
  double operator()(std::size_t node, std::size_t k) const { return values[k][node]; }
};

/// Backward SL recursion, v_{., N_T} = 0 and for k = N_T-1..0
///   v_{i,k} = min_alpha h (|alpha|^2/2 + cost(i,k))
///             + 1/(2d) sum_p [ I[v_{k+1}](P(x_i + h alpha + sqrt(2 nu d h) e_p))
///                            + I[v_{k+1}](P(x_i + h alpha - sqrt(2 nu d h) e_p)) ].
/// `cost(node, k)` returns the running cost at (x_node, t_k).
template <typename CostFn>
ValueField hjb_backward(CostFn&& cost, double nu, const ControlGrid& controls,
                        const GridSpec& grid, double h, std::size_t steps) {
  if (controls.empty()) throw ConfigError("control grid is empty");
  if (controls.dim() != grid.dim()) throw ConfigError("control and grid dimensions differ");
  if (!(nu >= 0.0)) throw ConfigError("viscosity must be nonnegative");
  if (!(h > 0.0) || steps == 0) throw ConfigError("hjb_backward needs h > 0 and steps > 0");

  const std::size_t dim = grid.dim();
  const double jump = std::sqrt(2.0 * nu * static_cast<double>(dim) * h);
  const double branch_weight = 1.0 / (2.0 * static_cast<double>(dim));

  ValueField field;
  field.grid = grid;
  field.h = h;
  field.values.assign(steps + 1, std::vector<double>(grid.size(), 0.0));
  field.policy.assign(steps, std::vector<std::size_t>(grid.size(), 0));

  for (std::size_t kk = steps; kk-- > 0;) {
    const std::vector<double>& next = field.values[kk + 1];
    std::vector<double>& now = field.values[kk];
    std::vector<std::size_t>& pol = field.policy[kk];
    parallel_for(grid.size(), [&](std::size_t i) {
      const Point x = grid.coord(i);
      const double running = cost(i, kk);
      if (!std::isfinite(running)) {
        std::ostringstream msg;
        msg << "non-finite running cost at node " << i << ", step " << kk;
        throw ModelEvaluationError(msg.str());
      }
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_idx = 0;
      for (std::size_t c = 0; c < controls.size(); ++c) {
        const Point& alpha = controls[c];
        Point centre = x;
        for (std::size_t a = 0; a < dim; ++a) centre[a] += h * alpha[a];
        double expect = 0.0;
        for (std::size_t p = 0; p < dim; ++p) {
          if (jump == 0.0) {
            expect += 2.0 * interpolate_inside(grid, next, grid.clamp(centre));
            continue;
          }
          Point up = centre;
          Point down = centre;
          up[p] += jump;
          down[p] -= jump;
          expect += interpolate_inside(grid, next, grid.clamp(up)) +
                    interpolate_inside(grid, next, grid.clamp(down));
        }
        const double val =
            h * (0.5 * dot(alpha, alpha) + running) + branch_weight * expect;
        if (val < best) {
          best = val;
          best_idx = c;
        }
      }
      now[i] = best;
      pol[i] = best_idx;
    });
  }
  return field;
}

/// b(x, t_k) = -grad (phi_eps * v(., t_k))(x), where v(., t_k) is treated as
/// node samples with weight rho^d, evenly reflected across the box faces.
/// With eps = 0 the gradient comes from second-order central differences
/// (one-sided at the faces), Q1-interpolated between nodes.
class MollifiedDrift {
 public:
  MollifiedDrift(const ValueField& v, double eps,
                 KernelNormalization norm = KernelNormalization::unit_mass,
                 double truncation = 4.0)
      : v_(&v), eps_(eps) {
    if (!(eps >= 0.0)) throw ConfigError("value mollifier width must be >= 0");
    kernel_.bandwidth = eps > 0.0 ? eps : 1.0;
    kernel_.truncation = truncation;
    kernel_.normalization = norm;
    if (eps > 0.0) kernel_.validate();
  }

  double epsilon() const { return eps_; }

  Point operator()(const Point& x, std::size_t k) const {
    const GridSpec& g = v_->grid;
    const std::vector<double>& vals = v_->values.at(k);
    if (eps_ == 0.0) {
      const std::vector<Point> nodes = fd_gradient(vals);
      Point out{};
      for (const NodeWeight& nw : basis_weights(g, g.clamp(x))) {
        for (std::size_t a = 0; a < g.dim(); ++a) out[a] -= nw.weight * nodes[nw.node][a];
      }
      return out;
    }
    return smoothed(vals, x);
  }

  /// Drift at t_k for t in [t_k, t_{k+1}).
  Point at_time(const Point& x, double t) const {
    const double pos = t / v_->h;
    auto k = static_cast<std::size_t>(std::floor(pos + 1e-12));
    k = std::min(k, v_->steps());
    return (*this)(x, k);
  }

  /// Drift at every node at t_k.
  std::vector<Point> at_nodes(std::size_t k) const {
    const GridSpec& g = v_->grid;
    const std::vector<double>& vals = v_->values.at(k);
    std::vector<Point> out(g.size());
    if (eps_ == 0.0) {
      out = fd_gradient(vals);
      for (Point& p : out) {
        for (double& c : p) c = -c;
      }
      return out;
    }
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = smoothed(vals, g.coord(i));
    return out;
  }

 private:
  // Reflected index: ..., 2, 1, [0, 1, ..., n-1], n-2, n-3, ...
  static std::size_t reflect(long i, std::size_t n) {
    const long last = static_cast<long>(n) - 1;
    const long period = 2 * last;
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m <= last ? m : period - m);
  }

  Point smoothed(const std::vector<double>& vals, const Point& x) const {
    const GridSpec& g = v_->grid;
    const std::size_t dim = g.dim();
    const double radius = kernel_.truncation * kernel_.bandwidth;
    const double s2 = kernel_.bandwidth * kernel_.bandwidth;
    const double weight = g.cell_volume();
    std::array<long, kMaxDim> first{}, last{};
    for (std::size_t a = 0; a < dim; ++a) {
      first[a] = static_cast<long>(std::ceil((x[a] - radius - g.lo(a)) / g.rho() - 1e-9));
      last[a] = static_cast<long>(std::floor((x[a] + radius - g.lo(a)) / g.rho() + 1e-9));
    }
    // Ghost node coordinate lo + i rho, i possibly outside [0, n).
    auto ghost = [&](std::size_t a, long i) {
      const long n = static_cast<long>(g.nodes(a));
      if (i < 0) return g.lo(a) + static_cast<double>(i) * g.rho();
      if (i >= n) return g.hi(a) + static_cast<double>(i - n + 1) * g.rho();
      return g.coord(a, static_cast<std::size_t>(i));
    };
    Point grad{};
    if (dim == 1) {
      for (long i = first[0]; i <= last[0]; ++i) {
        const Point z{x[0] - ghost(0, i), 0.0};
        const double w = weight * vals[reflect(i, g.nodes(0))] *
                         kernel_value(kernel_, dim, z) / s2;
        grad[0] -= w * z[0];
      }
    } else {
      for (long i = first[0]; i <= last[0]; ++i) {
        const double z0 = x[0] - ghost(0, i);
        const std::size_t ri = reflect(i, g.nodes(0));
        for (long j = first[1]; j <= last[1]; ++j) {
          const Point z{z0, x[1] - ghost(1, j)};
          const std::size_t node = g.flat({ri, reflect(j, g.nodes(1))});
          const double w = weight * vals[node] * kernel_value(kernel_, dim, z) / s2;
          grad[0] -= w * z[0];
          grad[1] -= w * z[1];
        }
      }
    }
    return {-grad[0], -grad[1]};
  }

  std::vector<Point> fd_gradient(const std::vector<double>& vals) const {
    const GridSpec& g = v_->grid;
    std::vector<Point> out(g.size(), Point{});
    for (std::size_t i = 0; i < g.size(); ++i) {
      const MultiIndex idx = g.multi(i);
      for (std::size_t a = 0; a < g.dim(); ++a) {
        const std::size_t n = g.nodes(a);  // >= 3 by GridSpec
        auto at = [&](std::size_t m) {
          MultiIndex j = idx;
          j[a] = m;
          return vals[g.flat(j)];
        };
        const std::size_t m = idx[a];
        double d;
        if (m == 0) {
          d = -3.0 * at(0) + 4.0 * at(1) - at(2);
        } else if (m + 1 == n) {
          d = 3.0 * at(m) - 4.0 * at(m - 1) + at(m - 2);
        } else {
          d = at(m + 1) - at(m - 1);
        }
        out[i][a] = d / (2.0 * g.rho());
      }
    }
    return out;
  }

  const ValueField* v_;
  double eps_;
  KernelSpec kernel_;
};

}  // namespace fpk
