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

// Coefficient models: constant and callback models for validation, the
// two-species attraction/repulsion system with mollified nonlinear
// diffusion, and the two-population segregation mean field game.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "fpk/common.hpp"
#include "fpk/hjb.hpp"
#include "fpk/lattice.hpp"
#include "fpk/measure.hpp"
#include "fpk/transport.hpp"

namespace fpk {

/// Constant drift and volatility columns, shared by both populations.
class LinearModel : public CoefficientModel {
 public:
  LinearModel(Point drift, std::vector<Point> sigma_columns)
      : drift_(drift), sigma_(std::move(sigma_columns)) {
    if (sigma_.empty()) throw ConfigError("linear model needs at least one volatility column");
  }

  std::size_t noise_count(std::size_t) const override { return sigma_.size(); }
  bool depends_on_future() const override { return false; }

  Point drift(std::size_t, const TrajectoryPair&, const Point&, std::size_t) const override {
    return drift_;
  }

  Point sigma(std::size_t, std::size_t p, const TrajectoryPair&, const Point&,
              std::size_t) const override {
    return sigma_.at(p);
  }

  double growth_constant() const override {
    double c = std::sqrt(dot(drift_, drift_));
    for (const Point& s : sigma_) c += std::sqrt(dot(s, s));
    return c;
  }

 private:
  Point drift_;
  std::vector<Point> sigma_;
};

inline std::unique_ptr<CoefficientModel> linear_model(Point drift,
                                                      std::vector<Point> sigma_columns) {
  return std::make_unique<LinearModel>(drift, std::move(sigma_columns));
}

/// Isotropic volatility sqrt(2 nu) I in dimension d, as d columns.
inline std::vector<Point> isotropic_columns(std::size_t dim, double nu) {
  std::vector<Point> cols(dim, Point{});
  for (std::size_t p = 0; p < dim; ++p) cols[p][p] = std::sqrt(2.0 * nu);
  return cols;
}

/// Drift and volatility columns given as functions of (x, t), shared by both
/// populations and independent of the densities.
class FieldModel : public CoefficientModel {
 public:
  using VectorField = std::function<Point(const Point&, double)>;

  FieldModel(VectorField drift, std::vector<VectorField> sigma_columns, double h,
             double growth = INFINITY)
      : drift_(std::move(drift)), sigma_(std::move(sigma_columns)), h_(h), growth_(growth) {
    if (sigma_.empty()) throw ConfigError("field model needs at least one volatility column");
  }

  std::size_t noise_count(std::size_t) const override { return sigma_.size(); }
  bool depends_on_future() const override { return false; }

  Point drift(std::size_t, const TrajectoryPair&, const Point& x,
              std::size_t k) const override {
    return drift_(x, static_cast<double>(k) * h_);
  }

  Point sigma(std::size_t, std::size_t p, const TrajectoryPair&, const Point& x,
              std::size_t k) const override {
    return sigma_.at(p)(x, static_cast<double>(k) * h_);
  }

  double growth_constant() const override { return growth_; }

 private:
  VectorField drift_;
  std::vector<VectorField> sigma_;
  double h_;
  double growth_;
};

/// Ornstein-Uhlenbeck dynamics dX = -theta X dt + sqrt(2 nu) dW.
inline std::unique_ptr<CoefficientModel> ou_model(std::size_t dim, double theta, double nu,
                                                  double h) {
  std::vector<FieldModel::VectorField> cols;
  for (const Point& c : isotropic_columns(dim, nu)) {
    cols.emplace_back([c](const Point&, double) { return c; });
  }
  return std::make_unique<FieldModel>(
      [theta](const Point& x, double) { return Point{-theta * x[0], -theta * x[1]}; },
      std::move(cols), h, std::abs(theta) + std::sqrt(2.0 * nu * static_cast<double>(dim)));
}

// ---------------------------------------------------------------------------
// Interacting species.

struct SpeciesParams {
  KernelSpec kernel{0.02, 4.0, KernelNormalization::unit_mass};

  void validate() const { kernel.validate(); }
};

/// Attraction of species 1 towards species 2, repulsion of species 2 by
/// species 1, quadratic self-attraction, and the regularized pressure
/// E'_delta(M) = 3/2 (M * phi_delta)^2:
///   b1 = -grad E'(M1) + (mean M1 - x) + (mean M2 - x)
///   b2 = -grad E'(M2) - (mean M1 - x) + (mean M2 - x)
/// with no noise (r = 1, sigma = 0).
class SpeciesModel : public CoefficientModel {
 public:
  explicit SpeciesModel(SpeciesParams params) : params_(params) { params_.validate(); }

  std::size_t noise_count(std::size_t) const override { return 1; }
  bool depends_on_future() const override { return false; }

  Point drift(std::size_t pop, const TrajectoryPair& m, const Point& x,
              std::size_t k) const override {
    const DiscreteDensity& own = m[pop].slice(k);
    const double u = convolve(own, params_.kernel, x);
    const Point du = convolve_gradient(own, params_.kernel, x);
    const Point mean1 = moments(m.first.slice(k)).mean;
    const Point mean2 = moments(m.second.slice(k)).mean;
    return combine(pop, own.grid().dim(), x, u, du, mean1, mean2);
  }

  Point sigma(std::size_t, std::size_t, const TrajectoryPair&, const Point&,
              std::size_t) const override {
    return Point{};
  }

  std::vector<Point> node_drifts(std::size_t pop, const TrajectoryPair& m,
                                 const GridSpec& grid, std::size_t k) const override {
    const DiscreteDensity& own = m[pop].slice(k);
    const NodeField field = convolve_on_nodes(own, params_.kernel);
    const Point mean1 = moments(m.first.slice(k)).mean;
    const Point mean2 = moments(m.second.slice(k)).mean;
    std::vector<Point> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      out[i] = combine(pop, grid.dim(), grid.coord(i), field.value[i], field.gradient[i],
                       mean1, mean2);
    }
    return out;
  }

  const SpeciesParams& params() const { return params_; }

 private:
  static Point combine(std::size_t pop, std::size_t dim, const Point& x, double u,
                       const Point& du, const Point& mean1, const Point& mean2) {
    const double cross = pop == 0 ? 1.0 : -1.0;
    Point b{};
    for (std::size_t a = 0; a < dim; ++a) {
      b[a] = -3.0 * u * du[a] + cross * (mean1[a] - x[a]) + (mean2[a] - x[a]);
    }
    return b;
  }

  SpeciesParams params_;
};

// ---------------------------------------------------------------------------
// Two-population mean field game with xenophobia and crowd aversion.

/// Smooth approximation of y^- = max(0, -y), within eta/2 of it.
inline double psi_minus(double y, double eta) {
  if (y <= 0.0) return -y + 0.5 * eta * std::expm1(y / eta);
  return 0.5 * eta * std::expm1(-y / eta);
}

/// Smooth approximation of y^+ = max(0, y), within eta/2 of it.
inline double psi_plus(double y, double eta) {
  if (y <= 0.0) return 0.5 * eta * std::expm1(y / eta);
  return y + 0.5 * eta * std::expm1(-y / eta);
}

struct MFGParams {
  double nu = 0.05;       // viscosity
  double eta = 1e-5;      // smoothing of the +/- parts
  KernelSpec density_kernel{0.025, 4.0, KernelNormalization::unit_mass};
  double epsilon = 0.025;  // value-function mollifier, 0 = finite differences
  double ratio_threshold = 0.7;
  double crowd_cap = 8.0;
  double control_cap = 5.0;
  double control_spacing = 0.125;

  void validate() const {
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw ConfigError("mfg: nu must be >= 0");
    if (!(eta > 0.0)) throw ConfigError("mfg: eta must be > 0");
    density_kernel.validate();
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
      throw ConfigError("mfg: epsilon must be >= 0");
    }
    if (!std::isfinite(ratio_threshold) || !std::isfinite(crowd_cap)) {
      throw ConfigError("mfg: thresholds must be finite");
    }
    if (!(control_cap >= 0.0) || !(control_spacing > 0.0)) {
      throw ConfigError("mfg: control cap must be >= 0 and spacing > 0");
    }
  }
};

/// Regularized coupling from the smoothed own (u) and other (w) densities.
inline double mfg_coupling(double u, double w, const MFGParams& params) {
  return psi_minus(u / (u + w + params.eta) - params.ratio_threshold, params.eta) +
         psi_plus(u + w - params.crowd_cap, params.eta);
}

/// V_{eta,delta} seen by population `pop` at (x, t_k): own population first.
inline double mfg_coupling_cost(std::size_t pop, const TrajectoryPair& m, const Point& x,
                                std::size_t k, const MFGParams& params) {
  const double u = convolve(m[pop].slice(k), params.density_kernel, x);
  const double w = convolve(m[1 - pop].slice(k), params.density_kernel, x);
  return mfg_coupling(u, w, params);
}

/// Running-cost table [k][node] on the grid of population `pop`.
inline std::vector<std::vector<double>> mfg_cost_table(std::size_t pop,
                                                       const TrajectoryPair& m,
                                                       const MFGParams& params) {
  const GridSpec& g = m[pop].grid();
  const std::size_t slices = m[pop].size();
  const bool shared_grid = m.first.grid() == m.second.grid();
  std::vector<std::vector<double>> table(slices);
  parallel_for(slices, [&](std::size_t k) {
    std::vector<double>& row = table[k];
    row.resize(g.size());
    if (shared_grid) {
      const NodeField u = convolve_on_nodes(m[pop].slice(k), params.density_kernel);
      const NodeField w = convolve_on_nodes(m[1 - pop].slice(k), params.density_kernel);
      for (std::size_t i = 0; i < g.size(); ++i) {
        row[i] = mfg_coupling(u.value[i], w.value[i], params);
      }
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) {
        row[i] = mfg_coupling_cost(pop, m, g.coord(i), k, params);
      }
    }
  });
  return table;
}

/// b = -grad v^{eps} where v solves the backward SL HJB with the coupling
/// cost built from the given trajectories; sigma = sqrt(2 nu) I, r = d.
/// Value functions and node drifts are cached per trajectory version.
class MFGModel : public CoefficientModel {
 public:
  explicit MFGModel(MFGParams params) : params_(params) { params_.validate(); }

  std::size_t noise_count(std::size_t) const override { return dim_hint_; }
  bool depends_on_future() const override { return true; }

  Point drift(std::size_t pop, const TrajectoryPair& m, const Point& x,
              std::size_t k) const override {
    const auto solved = solve(m);
    return MollifiedDrift(solved->values[pop], params_.epsilon,
                          params_.density_kernel.normalization,
                          params_.density_kernel.truncation)(x, k);
  }

  Point sigma(std::size_t, std::size_t p, const TrajectoryPair&, const Point&,
              std::size_t) const override {
    Point s{};
    s.at(p) = std::sqrt(2.0 * params_.nu);
    return s;
  }

  std::vector<Point> node_drifts(std::size_t pop, const TrajectoryPair& m,
                                 const GridSpec&, std::size_t k) const override {
    return solve(m)->node_drifts[pop].at(k);
  }

  /// Sets r = d; must match the grids the model is used with.
  void set_dimension(std::size_t dim) { dim_hint_ = dim; }

  const MFGParams& params() const { return params_; }

  struct Solved {
    std::uint64_t key_first = 0;
    std::uint64_t key_second = 0;
    std::array<ValueField, 2> values;
    std::array<std::vector<std::vector<Point>>, 2> node_drifts;  // [pop][k][node]
  };

  /// Value functions and drift tables for a trajectory pair.
  std::shared_ptr<const Solved> solve(const TrajectoryPair& m) const {
    std::lock_guard<std::mutex> lock(mutex_);
    if (cache_ && cache_->key_first == m.first.version() &&
        cache_->key_second == m.second.version()) {
      return cache_;
    }
    if (m.first.grid().dim() != dim_hint_ || m.second.grid().dim() != dim_hint_) {
      throw ConfigError("MFG model dimension does not match the grids");
    }
    auto out = std::make_shared<Solved>();
    out->key_first = m.first.version();
    out->key_second = m.second.version();
    for (std::size_t pop = 0; pop < 2; ++pop) {
      const DensityTrajectory& traj = m[pop];
      const auto table = mfg_cost_table(pop, m, params_);
      const ControlGrid controls = ControlGrid::for_grid(
          traj.grid(), traj.h(), params_.control_cap, params_.control_spacing);
      out->values[pop] = hjb_backward(
          [&table](std::size_t i, std::size_t k) { return table[k][i]; }, params_.nu,
          controls, traj.grid(), traj.h(), traj.steps());
      const MollifiedDrift drift(out->values[pop], params_.epsilon,
                                 params_.density_kernel.normalization,
                                 params_.density_kernel.truncation);
      auto& tables = out->node_drifts[pop];
      tables.resize(traj.size());
      parallel_for(traj.size(), [&](std::size_t k) { tables[k] = drift.at_nodes(k); });
    }
    cache_ = out;
    return out;
  }

 private:
  MFGParams params_;
  std::size_t dim_hint_ = 1;
  mutable std::mutex mutex_;
  mutable std::shared_ptr<const Solved> cache_;
};

inline std::unique_ptr<MFGModel> mfg_model(const MFGParams& params, std::size_t dim) {
  auto model = std::make_unique<MFGModel>(params);
  model->set_dimension(dim);
  return model;
}

}  // namespace fpk
