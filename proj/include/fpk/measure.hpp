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

// Discrete probability measures on a lattice, their piecewise-linear time
// extension, moments, the 1D Monge-Kantorovich distance and Gaussian
// smoothing.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fpk/common.hpp"
#include "fpk/lattice.hpp"

namespace fpk {

/// Per-node masses of a probability measure supported on the grid nodes:
/// every mass is finite and >= 0 and the masses sum to 1.
class DiscreteDensity {
 public:
  DiscreteDensity() = default;

  DiscreteDensity(GridSpec grid, std::vector<double> mass)
      : grid_(std::move(grid)), mass_(std::move(mass)) {
    if (mass_.size() != grid_.size()) {
      throw DomainError("density has " + std::to_string(mass_.size()) +
                        " masses for a grid of " +
                        std::to_string(grid_.size()) + " nodes");
    }
    double total = 0.0;
    for (double m : mass_) {
      if (!(m >= 0.0) || !std::isfinite(m)) {
        throw DomainError("density mass is negative or not finite");
      }
      total += m;
    }
    if (std::abs(total - 1.0) > kMassTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "density masses sum to " << total << ", not 1";
      throw DomainError(msg.str());
    }
  }

  static DiscreteDensity dirac(const GridSpec& grid, std::size_t node) {
    std::vector<double> mass(grid.size(), 0.0);
    mass.at(node) = 1.0;
    return {grid, std::move(mass)};
  }

  const GridSpec& grid() const { return grid_; }
  std::span<const double> mass() const { return mass_; }
  double operator[](std::size_t i) const { return mass_[i]; }
  std::size_t size() const { return mass_.size(); }

  double total() const {
    double s = 0.0;
    for (double m : mass_) s += m;
    return s;
  }

  /// The density view m_i / rho^d, uniform on each cell.
  double density(std::size_t i) const { return mass_[i] / grid_.cell_volume(); }

 private:
  GridSpec grid_;
  std::vector<double> mass_;
};

/// Discretizes a nonnegative density function: mass_i is the midpoint rule
/// f(x_i) |E_i| over the clipped cell, renormalized to unit total mass.
template <typename DensityFn>
DiscreteDensity from_initial(const GridSpec& grid, DensityFn&& density_fn) {
  std::vector<double> mass(grid.size());
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double f = density_fn(grid.coord(i));
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw DegenerateInputError("initial density is negative or not finite");
    }
    mass[i] = f * grid.cell_volume(i);
    total += mass[i];
  }
  if (!(total > 0.0)) {
    throw DegenerateInputError("initial density vanishes at every node");
  }
  for (double& m : mass) m /= total;
  return {grid, std::move(mass)};
}

/// Densities at the time nodes t_k = k h. Slices can be released once no
/// longer needed; reading a released slice is a MisuseError.
class DensityTrajectory {
 public:
  DensityTrajectory() = default;

  DensityTrajectory(GridSpec grid, double h) : grid_(std::move(grid)), h_(h) {
    if (!(h > 0.0)) throw ConfigError("time step must be positive");
    touch();
  }

  /// N_T + 1 copies of `initial`.
  static DensityTrajectory constant(const DiscreteDensity& initial, double h,
                                    std::size_t steps) {
    DensityTrajectory traj(initial.grid(), h);
    traj.slices_.assign(steps + 1, initial);
    traj.touch();
    return traj;
  }

  void append(DiscreteDensity slice) {
    if (!(slice.grid() == grid_)) {
      throw DomainError("trajectory slice on a different grid");
    }
    slices_.push_back(std::move(slice));
    touch();
  }

  void replace(std::size_t k, DiscreteDensity slice) {
    if (!(slice.grid() == grid_)) {
      throw DomainError("trajectory slice on a different grid");
    }
    slices_.at(k) = std::move(slice);
    touch();
  }

  /// Frees the storage of every slice before k.
  void release_before(std::size_t k) {
    for (std::size_t i = released_; i < std::min(k, slices_.size()); ++i) {
      slices_[i] = DiscreteDensity();
    }
    released_ = std::max(released_, std::min(k, slices_.size()));
  }

  const DiscreteDensity& slice(std::size_t k) const {
    if (k >= slices_.size()) {
      throw DomainError("trajectory slice " + std::to_string(k) +
                        " not computed yet");
    }
    if (k < released_) {
      throw MisuseError("trajectory slice " + std::to_string(k) +
                        " was released");
    }
    return slices_[k];
  }

  const GridSpec& grid() const { return grid_; }
  double h() const { return h_; }
  std::size_t size() const { return slices_.size(); }
  std::size_t steps() const { return slices_.empty() ? 0 : slices_.size() - 1; }
  double time(std::size_t k) const { return static_cast<double>(k) * h_; }
  double final_time() const { return time(steps()); }
  bool retains(std::size_t k) const { return k >= released_ && k < slices_.size(); }

  /// Changes whenever the contents change; copies share the tag.
  std::uint64_t version() const { return version_; }

 private:
  void touch() {
    static std::atomic<std::uint64_t> counter{0};
    version_ = ++counter;
  }

  GridSpec grid_;
  double h_ = 0.0;
  std::vector<DiscreteDensity> slices_;
  std::size_t released_ = 0;
  std::uint64_t version_ = 0;
};

/// mu(t) = (1 - lambda) slice_k + lambda slice_{k+1}.
struct TimeWeight {
  std::size_t k;
  double lambda;
};

/// Slice pair and weight for time t on the grid {k h : k = 0..steps}.
inline TimeWeight time_weight(double h, std::size_t steps, double t) {
  const double end = h * static_cast<double>(steps);
  const double slack = 1e-12 * std::max(1.0, end);
  if (!(t >= -slack) || !(t <= end + slack)) {
    throw DomainError("time " + std::to_string(t) + " outside the horizon [0, " +
                      std::to_string(end) + "]");
  }
  if (t >= end - slack) return {steps, 0.0};
  t = std::max(t, 0.0);
  const double pos = t / h;
  std::size_t k = static_cast<std::size_t>(std::floor(pos));
  double lambda = pos - static_cast<double>(k);
  // Grid times hit exactly despite rounding in t / h.
  if (lambda > 1.0 - 1e-12) {
    ++k;
    lambda = 0.0;
  } else if (lambda < 1e-12) {
    lambda = 0.0;
  }
  if (k >= steps) return {steps, 0.0};
  return {k, lambda};
}

inline TimeWeight at_time(const DensityTrajectory& traj, double t) {
  if (traj.size() == 0) throw DomainError("empty trajectory");
  return time_weight(traj.h(), traj.steps(), t);
}

/// (1 - lambda) a + lambda b.
inline DiscreteDensity blend(const DiscreteDensity& a, const DiscreteDensity& b,
                             double lambda) {
  if (lambda == 0.0) return a;
  std::vector<double> mass(a.size());
  for (std::size_t i = 0; i < mass.size(); ++i) {
    mass[i] = (1.0 - lambda) * a[i] + lambda * b[i];
  }
  return {a.grid(), std::move(mass)};
}

/// The measure mu(t) of the piecewise-linear time extension.
inline DiscreteDensity blend(const DensityTrajectory& traj, double t) {
  const TimeWeight tw = at_time(traj, t);
  if (tw.lambda == 0.0) return traj.slice(tw.k);
  return blend(traj.slice(tw.k), traj.slice(tw.k + 1), tw.lambda);
}

/// Monge-Kantorovich distance d_1 of two measures on the same 1D grid:
/// the L1 distance between their cumulative distribution functions.
inline double wasserstein1_1d(const DiscreteDensity& a, const DiscreteDensity& b) {
  if (a.grid().dim() != 1 || b.grid().dim() != 1) {
    throw UnsupportedOperationError("wasserstein1_1d needs one-dimensional grids");
  }
  if (!(a.grid() == b.grid())) {
    throw DomainError("wasserstein1_1d needs both measures on the same grid");
  }
  const GridSpec& g = a.grid();
  double cdf_gap = 0.0;
  double dist = 0.0;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    cdf_gap += a[i] - b[i];
    dist += std::abs(cdf_gap) * (g.coord(0, i + 1) - g.coord(0, i));
  }
  return dist;
}

struct Moments {
  Point mean{};
  double second_moment = 0.0;  // sum m_i |x_i|^2
  std::array<std::array<double, kMaxDim>, kMaxDim> covariance{};
};

inline Moments moments(const DiscreteDensity& a) {
  const GridSpec& g = a.grid();
  Moments out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point x = g.coord(i);
    for (std::size_t p = 0; p < g.dim(); ++p) out.mean[p] += a[i] * x[p];
    out.second_moment += a[i] * dot(x, x);
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point x = g.coord(i);
    for (std::size_t p = 0; p < g.dim(); ++p) {
      for (std::size_t q = 0; q < g.dim(); ++q) {
        out.covariance[p][q] +=
            a[i] * (x[p] - out.mean[p]) * (x[q] - out.mean[q]);
      }
    }
  }
  return out;
}

enum class KernelNormalization {
  unit_mass,      // (2 pi bw^2)^{-d/2} exp(-|x|^2 / (2 bw^2))
  paper_literal,  // sqrt(2 pi) bw exp(-|x|^2 / (2 bw^2))
};

/// Truncated isotropic Gaussian. The support is cut to the box
/// |x|_inf <= truncation * bandwidth and is not renormalized.
struct KernelSpec {
  double bandwidth = 0.0;
  double truncation = 4.0;
  KernelNormalization normalization = KernelNormalization::unit_mass;

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
      throw ConfigError("kernel bandwidth must be positive");
    }
    if (!(truncation >= 3.0)) {
      throw ConfigError("kernel truncation radius must be at least 3 bandwidths");
    }
  }

  double prefactor(std::size_t dim) const {
    if (normalization == KernelNormalization::paper_literal) {
      return std::sqrt(2.0 * std::numbers::pi) * bandwidth;
    }
    return std::pow(2.0 * std::numbers::pi * bandwidth * bandwidth,
                    -0.5 * static_cast<double>(dim));
  }

  /// Largest node offset inside the truncation box on a grid of spacing rho.
  std::size_t reach(double rho) const {
    return static_cast<std::size_t>(std::floor(truncation * bandwidth / rho + 1e-9));
  }
};

namespace detail {

struct IndexRange {
  std::size_t first;
  std::size_t last;  // inclusive; empty when first > last
};

inline IndexRange window(const GridSpec& g, std::size_t axis, double centre,
                         double radius) {
  const double lo_t = (centre - radius - g.lo(axis)) / g.rho();
  const double hi_t = (centre + radius - g.lo(axis)) / g.rho();
  const double last = static_cast<double>(g.nodes(axis) - 1);
  const double first = std::max(0.0, std::ceil(lo_t - 1e-9));
  const double stop = std::min(last, std::floor(hi_t + 1e-9));
  if (first > stop) return {1, 0};
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(stop)};
}

// Visits the nodes of the truncation window around x as fn(node, x - x_node).
template <typename Fn>
void for_each_in_window(const GridSpec& g, const KernelSpec& k, const Point& x,
                        Fn&& fn) {
  const double radius = k.truncation * k.bandwidth;
  const IndexRange r0 = window(g, 0, x[0], radius);
  if (r0.first > r0.last) return;
  if (g.dim() == 1) {
    for (std::size_t i = r0.first; i <= r0.last; ++i) {
      fn(i, Point{x[0] - g.coord(0, i), 0.0});
    }
    return;
  }
  const IndexRange r1 = window(g, 1, x[1], radius);
  if (r1.first > r1.last) return;
  for (std::size_t i = r0.first; i <= r0.last; ++i) {
    const double z0 = x[0] - g.coord(0, i);
    for (std::size_t j = r1.first; j <= r1.last; ++j) {
      fn(g.flat({i, j}), Point{z0, x[1] - g.coord(1, j)});
    }
  }
}

}  // namespace detail

/// Kernel value phi(z) (no truncation applied).
inline double kernel_value(const KernelSpec& k, std::size_t dim, const Point& z) {
  const double s2 = k.bandwidth * k.bandwidth;
  return k.prefactor(dim) * std::exp(-dot(z, z) / (2.0 * s2));
}

/// (a * phi)(x) = sum_j a_j phi(x - x_j) over the truncation window.
inline double convolve(const DiscreteDensity& a, const KernelSpec& k,
                       const Point& x) {
  const std::size_t dim = a.grid().dim();
  double sum = 0.0;
  detail::for_each_in_window(a.grid(), k, x, [&](std::size_t j, const Point& z) {
    if (a[j] != 0.0) sum += a[j] * kernel_value(k, dim, z);
  });
  return sum;
}

/// (a * grad phi)(x), with the analytic kernel derivative.
inline Point convolve_gradient(const DiscreteDensity& a, const KernelSpec& k,
                               const Point& x) {
  const std::size_t dim = a.grid().dim();
  const double s2 = k.bandwidth * k.bandwidth;
  Point grad{};
  detail::for_each_in_window(a.grid(), k, x, [&](std::size_t j, const Point& z) {
    if (a[j] == 0.0) return;
    const double w = a[j] * kernel_value(k, dim, z) / s2;
    for (std::size_t p = 0; p < dim; ++p) grad[p] -= w * z[p];
  });
  return grad;
}

/// Smoothed field and its gradient sampled at every grid node.
struct NodeField {
  std::vector<double> value;
  std::vector<Point> gradient;
};

/// Node-sampled convolution of per-node weights with a truncated Gaussian,
/// computed as separable passes. Agrees with `convolve` and
/// `convolve_gradient` evaluated at nodes up to rounding.
inline NodeField convolve_on_nodes(const GridSpec& g, std::span<const double> weights,
                                   const KernelSpec& k) {
  const std::size_t reach = k.reach(g.rho());
  const double s2 = k.bandwidth * k.bandwidth;
  // 1D factors exp(-z^2 / 2 s^2) and their derivatives at offsets -reach..reach.
  const std::size_t taps = 2 * reach + 1;
  std::vector<double> f(taps), df(taps);
  for (std::size_t t = 0; t < taps; ++t) {
    const double z = (static_cast<double>(t) - static_cast<double>(reach)) * g.rho();
    f[t] = std::exp(-z * z / (2.0 * s2));
    df[t] = -z / s2 * f[t];
  }
  const double pre = k.prefactor(g.dim());
  NodeField out;
  out.value.assign(g.size(), 0.0);
  out.gradient.assign(g.size(), Point{});

  auto line = [&](std::span<const double> in, std::size_t n, std::size_t stride,
                  std::size_t offset, const std::vector<double>& tap,
                  std::vector<double>& dst) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i > reach ? i - reach : 0;
      const std::size_t hi = std::min(n - 1, i + reach);
      double s = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) {
        s += in[offset + j * stride] * tap[i + reach - j];
      }
      dst[offset + i * stride] = s;
    }
  };

  if (g.dim() == 1) {
    std::vector<double> v(g.size()), d(g.size());
    line(weights, g.size(), 1, 0, f, v);
    line(weights, g.size(), 1, 0, df, d);
    for (std::size_t i = 0; i < g.size(); ++i) {
      out.value[i] = pre * v[i];
      out.gradient[i][0] = pre * d[i];
    }
    return out;
  }
  const std::size_t n0 = g.nodes(0);
  const std::size_t n1 = g.nodes(1);
  // Pass along axis 1 (contiguous), then along axis 0.
  std::vector<double> a_f(g.size()), a_df(g.size());
  for (std::size_t r = 0; r < n0; ++r) {
    line(weights, n1, 1, r * n1, f, a_f);
    line(weights, n1, 1, r * n1, df, a_df);
  }
  std::vector<double> v(g.size()), d0(g.size()), d1(g.size());
  for (std::size_t c = 0; c < n1; ++c) {
    line(a_f, n0, n1, c, f, v);
    line(a_f, n0, n1, c, df, d0);
    line(a_df, n0, n1, c, f, d1);
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.value[i] = pre * v[i];
    out.gradient[i] = {pre * d0[i], pre * d1[i]};
  }
  return out;
}

inline NodeField convolve_on_nodes(const DiscreteDensity& a, const KernelSpec& k) {
  return convolve_on_nodes(a.grid(), a.mass(), k);
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Snapshot CSV: header `axis0[,axis1],density`, one row per node in flat
/// order, density = mass / rho^d.
inline void write_density_csv(std::ostream& os, const DiscreteDensity& a) {
  const GridSpec& g = a.grid();
  os << (g.dim() == 1 ? "axis0,density\n" : "axis0,axis1,density\n");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point x = g.coord(i);
    os << format_double(x[0]) << ',';
    if (g.dim() == 2) os << format_double(x[1]) << ',';
    os << format_double(a.density(i)) << '\n';
  }
}

}  // namespace fpk
