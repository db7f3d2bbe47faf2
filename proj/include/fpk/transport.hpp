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

// The semi-Lagrangian transport scheme: one-step discrete characteristics,
// Q1 mass scatter with projection onto the box, and the forward march.

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fpk/common.hpp"
#include "fpk/lattice.hpp"
#include "fpk/measure.hpp"

namespace fpk {

enum class BoundaryMode {
  project,        // clamp characteristics onto the box (Neumann)
  error_on_exit,  // a characteristic leaving the box is an error
};

struct SchemeConfig {
  double h = 0.0;
  std::size_t steps = 0;
  BoundaryMode boundary = BoundaryMode::project;

  double final_time() const { return h * static_cast<double>(steps); }

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("time step must be positive");
    if (steps == 0) throw ConfigError("number of time steps must be positive");
  }

  /// Horizon T split into the fewest equal steps no longer than c rho^{3/2}.
  static SchemeConfig from_step_rule(double final_time, double rho, double c) {
    if (!(final_time > 0.0) || !(rho > 0.0) || !(c > 0.0)) {
      throw ConfigError("step rule needs positive T, rho and c");
    }
    const double target = c * std::pow(rho, 1.5);
    const double n = std::ceil(final_time / target - 1e-9);
    SchemeConfig cfg;
    cfg.steps = static_cast<std::size_t>(std::max(1.0, n));
    cfg.h = final_time / static_cast<double>(cfg.steps);
    return cfg;
  }

  /// Horizon T split into steps of (approximately) h.
  static SchemeConfig from_step(double final_time, double h) {
    if (!(final_time > 0.0) || !(h > 0.0)) {
      throw ConfigError("time stepping needs positive T and h");
    }
    SchemeConfig cfg;
    cfg.steps = static_cast<std::size_t>(std::max(1.0, std::round(final_time / h)));
    cfg.h = final_time / static_cast<double>(cfg.steps);
    return cfg;
  }

  /// True when h exceeds rho^{3/2}, beyond which accuracy near the boundary
  /// degrades.
  bool coarse_in_time(double rho) const { return h > std::pow(rho, 1.5) * (1.0 + 1e-12); }
};

/// Read-only access to the two population trajectories a model reads.
struct TrajectoryPair {
  const DensityTrajectory& first;
  const DensityTrajectory& second;

  const DensityTrajectory& operator[](std::size_t pop) const {
    return pop == 0 ? first : second;
  }
};

/// Owning pair of population trajectories.
struct Trajectories {
  DensityTrajectory first;
  DensityTrajectory second;

  TrajectoryPair view() const { return {first, second}; }
  DensityTrajectory& operator[](std::size_t pop) { return pop == 0 ? first : second; }
  const DensityTrajectory& operator[](std::size_t pop) const {
    return pop == 0 ? first : second;
  }
};

/// Drift b and volatility columns sigma_p for both populations (indexed 0
/// and 1). Evaluations happen at grid times t_k = k h and may read the
/// trajectories; explicit models read slices up to k only.
class CoefficientModel {
 public:
  virtual ~CoefficientModel() = default;

  /// Number r of volatility columns (independent noises) for a population.
  virtual std::size_t noise_count(std::size_t pop) const = 0;

  /// True when coefficients at t_k read slices after k.
  virtual bool depends_on_future() const = 0;

  virtual Point drift(std::size_t pop, const TrajectoryPair& m, const Point& x,
                      std::size_t k) const = 0;

  virtual Point sigma(std::size_t pop, std::size_t p, const TrajectoryPair& m,
                      const Point& x, std::size_t k) const = 0;

  /// Constant C of the bound |b| + |sigma| <= C (1 + |x|); infinity when the
  /// model does not declare one.
  virtual double growth_constant() const { return INFINITY; }

  /// Drift at every node of `grid`. Models with nonlocal terms override this
  /// to share work between nodes.
  virtual std::vector<Point> node_drifts(std::size_t pop, const TrajectoryPair& m,
                                         const GridSpec& grid, std::size_t k) const {
    std::vector<Point> out(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) out[j] = drift(pop, m, grid.coord(j), k);
    return out;
  }
};

struct Characteristics {
  Point plus;
  Point minus;
};

namespace detail {

inline std::string eval_context(std::size_t pop, std::size_t j, std::size_t k,
                                std::size_t p) {
  std::ostringstream os;
  os << " (population " << pop + 1 << ", node " << j << ", step " << k
     << ", noise " << p << ")";
  return os.str();
}

inline Characteristics characteristics_from(const Point& x, const Point& b,
                                            const Point& sigma_p, double h,
                                            std::size_t r, std::size_t dim) {
  const double scale = std::sqrt(static_cast<double>(r) * h);
  Characteristics c{x, x};
  for (std::size_t a = 0; a < dim; ++a) {
    const double centre = x[a] + h * b[a];
    c.plus[a] = centre + scale * sigma_p[a];
    c.minus[a] = centre - scale * sigma_p[a];
  }
  return c;
}

}  // namespace detail

/// Phi^{+/-} = x_j + h b +/- sqrt(r h) sigma_p, before any projection.
inline Characteristics characteristics(const CoefficientModel& model, std::size_t pop,
                                       std::size_t p, const TrajectoryPair& m,
                                       std::size_t j, std::size_t k, double h) {
  const GridSpec& g = m[pop].grid();
  const Point x = g.coord(j);
  const Point b = model.drift(pop, m, x, k);
  const Point s = model.sigma(pop, p, m, x, k);
  if (!all_finite(b) || !all_finite(s)) {
    throw ModelEvaluationError("non-finite drift or volatility" +
                               detail::eval_context(pop, j, k, p));
  }
  return detail::characteristics_from(x, b, s, h, model.noise_count(pop), g.dim());
}

/// Componentwise clamp onto the box: the projected-Euler boundary rule.
inline Point project_to_domain(const GridSpec& g, const Point& x) { return g.clamp(x); }

namespace detail {

// Sources are split into fixed-size chunks, each scattering into its own
// buffer; buffers are summed in chunk order so the result does not depend on
// the number of threads.
inline constexpr std::size_t kScatterChunk = 4096;

}  // namespace detail

/// One step of the scheme for population `pop`:
///   m_{k+1,i} = 1/(2r) sum_p sum_j [beta_i(P Phi+) + beta_i(P Phi-)] m_{k,j}.
/// Coefficients are evaluated on `coeffs` (which may be the trajectories
/// under construction or a frozen reference).
inline DiscreteDensity step(const CoefficientModel& model, std::size_t pop,
                            const TrajectoryPair& coeffs, std::size_t k,
                            const DiscreteDensity& current, double h,
                            BoundaryMode boundary = BoundaryMode::project) {
  const GridSpec& g = current.grid();
  const std::size_t r = model.noise_count(pop);
  if (r == 0) throw ConfigError("noise count must be at least 1");
  const std::vector<Point> drifts = model.node_drifts(pop, coeffs, g, k);
  const double share = 1.0 / (2.0 * static_cast<double>(r));
  const double exit_slack = 1e-9 * g.rho();

  const std::size_t chunks = (g.size() + detail::kScatterChunk - 1) / detail::kScatterChunk;
  std::vector<std::vector<double>> partial(chunks);

  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double>& buf = partial[c];
    buf.assign(g.size(), 0.0);
    const std::size_t first = c * detail::kScatterChunk;
    const std::size_t last = std::min(g.size(), first + detail::kScatterChunk);
    for (std::size_t j = first; j < last; ++j) {
      const Point x = g.coord(j);
      const Point& b = drifts[j];
      for (std::size_t p = 0; p < r; ++p) {
        const Point s = model.sigma(pop, p, coeffs, x, k);
        if (!all_finite(b) || !all_finite(s)) {
          throw ModelEvaluationError("non-finite drift or volatility" +
                                     detail::eval_context(pop, j, k, p));
        }
        if (current[j] == 0.0) continue;
        const Characteristics ch = detail::characteristics_from(x, b, s, h, r, g.dim());
        const double w = current[j] * share;
        for (const Point* end : {&ch.plus, &ch.minus}) {
          if (boundary == BoundaryMode::error_on_exit && !g.contains(*end, exit_slack)) {
            throw BoundaryExitError("characteristic leaves the domain" +
                                    detail::eval_context(pop, j, k, p));
          }
          for (const NodeWeight& nw : basis_weights(g, project_to_domain(g, *end))) {
            buf[nw.node] += w * nw.weight;
          }
        }
      }
    }
  });

  std::vector<double> next = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += partial[c][i];
  }
  return {g, std::move(next)};
}

/// Which slices of the produced trajectories stay in memory.
enum class Retention {
  all,
  latest,  // explicit solves only: older slices are released as the march goes
};

/// Called with k and the two slices at t_k, for k = 0..N_T.
using SliceObserver =
    std::function<void(std::size_t, const DiscreteDensity&, const DiscreteDensity&)>;

struct ForwardOptions {
  SliceObserver observer;
  Retention retention = Retention::all;
};

/// Marches both populations from t_0 to t_N. With `frozen` null, the
/// coefficients read the trajectories being built (explicit scheme);
/// otherwise they read the frozen pair.
inline Trajectories forward_pass(const CoefficientModel& model, const SchemeConfig& cfg,
                                 const DiscreteDensity& m0_first,
                                 const DiscreteDensity& m0_second,
                                 const TrajectoryPair* frozen,
                                 const ForwardOptions& options = {}) {
  cfg.validate();
  Trajectories out{DensityTrajectory(m0_first.grid(), cfg.h),
                   DensityTrajectory(m0_second.grid(), cfg.h)};
  out.first.append(m0_first);
  out.second.append(m0_second);
  if (options.observer) options.observer(0, m0_first, m0_second);
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const TrajectoryPair coeffs = frozen ? *frozen : out.view();
    DiscreteDensity next_first =
        step(model, 0, coeffs, k, out.first.slice(k), cfg.h, cfg.boundary);
    DiscreteDensity next_second =
        step(model, 1, coeffs, k, out.second.slice(k), cfg.h, cfg.boundary);
    out.first.append(std::move(next_first));
    out.second.append(std::move(next_second));
    if (options.retention == Retention::latest) {
      out.first.release_before(k + 1);
      out.second.release_before(k + 1);
    }
    if (options.observer) {
      options.observer(k + 1, out.first.slice(k + 1), out.second.slice(k + 1));
    }
  }
  return out;
}

/// Explicit march for models whose coefficients at t_k read only the past.
inline Trajectories solve_explicit(const CoefficientModel& model, const SchemeConfig& cfg,
                                   const DiscreteDensity& m0_first,
                                   const DiscreteDensity& m0_second,
                                   const ForwardOptions& options = {}) {
  if (model.depends_on_future()) {
    throw MisuseError(
        "model coefficients depend on future densities; use solve_implicit");
  }
  return forward_pass(model, cfg, m0_first, m0_second, nullptr, options);
}

}  // namespace fpk
