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

// Fixed-point driver for models whose coefficients read future densities:
// fictitious play (running average of best responses) or damped Picard.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpk/common.hpp"
#include "fpk/measure.hpp"
#include "fpk/transport.hpp"

namespace fpk {

enum class FixedPointMethod { fictitious_play, picard };

struct FixedPointConfig {
  FixedPointMethod method = FixedPointMethod::fictitious_play;
  double damping = 1.0;  // picard only
  double tol = 5e-3;     // max-norm on the density view
  std::size_t max_iters = 200;

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("fixed point tolerance must be positive");
    if (max_iters < 1) throw ConfigError("fixed point needs max_iters >= 1");
    if (method == FixedPointMethod::picard && !(damping > 0.0 && damping <= 1.0)) {
      throw ConfigError("picard damping must lie in (0, 1]");
    }
  }
};

struct IterationReport {
  std::size_t iterations = 0;
  std::vector<double> residuals;
  bool converged = false;
  double wall_time_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"iterations", iterations},
            {"residuals", residuals},
            {"converged", converged},
            {"wall_time_seconds", wall_time_seconds}};
  }
};

struct ImplicitSolution {
  Trajectories trajectories;
  IterationReport report;
};

/// max_iters reached. Carries the report and the last fresh trajectories.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, IterationReport report,
                      std::shared_ptr<Trajectories> partial)
      : Error(what), report_(std::move(report)), partial_(std::move(partial)) {}

  const IterationReport& report() const { return report_; }
  const Trajectories& partial() const { return *partial_; }

 private:
  IterationReport report_;
  std::shared_ptr<Trajectories> partial_;
};

/// Largest |density difference| over nodes, times and both populations.
inline double density_residual(const Trajectories& a, const Trajectories& b) {
  double worst = 0.0;
  for (std::size_t pop = 0; pop < 2; ++pop) {
    const DensityTrajectory& x = a[pop];
    const DensityTrajectory& y = b[pop];
    const double scale = 1.0 / x.grid().cell_volume();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const DiscreteDensity& p = x.slice(k);
      const DiscreteDensity& q = y.slice(k);
      for (std::size_t i = 0; i < p.size(); ++i) {
        worst = std::max(worst, std::abs(p[i] - q[i]) * scale);
      }
    }
  }
  return worst;
}

namespace detail {

inline DensityTrajectory mix(const DensityTrajectory& ref, const DensityTrajectory& fresh,
                             double keep, double take) {
  DensityTrajectory out(ref.grid(), ref.h());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const DiscreteDensity& a = ref.slice(k);
    const DiscreteDensity& b = fresh.slice(k);
    std::vector<double> mass(a.size());
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] = keep * a[i] + take * b[i];
    out.append(DiscreteDensity(a.grid(), std::move(mass)));
  }
  return out;
}

}  // namespace detail

/// Called after each iteration n with the fresh trajectories and the
/// reference they were computed from.
using IterationObserver =
    std::function<void(std::size_t, const Trajectories&, const Trajectories&)>;

/// Iterates: fresh = forward pass with coefficients frozen on the reference;
/// reference <- (n ref + fresh) / (n + 1) (fictitious play) or
/// (1 - theta) ref + theta fresh (picard). The reference at n = 0 is the
/// initial density held constant in time. Stops once two successive fresh
/// outputs differ by less than tol in the density view.
inline ImplicitSolution solve_implicit(const CoefficientModel& model, const SchemeConfig& cfg,
                                       const FixedPointConfig& fp,
                                       const DiscreteDensity& m0_first,
                                       const DiscreteDensity& m0_second,
                                       const IterationObserver& observer = {}) {
  if (!model.depends_on_future()) {
    throw MisuseError("model is explicit; use solve_explicit");
  }
  cfg.validate();
  fp.validate();
  const auto start = std::chrono::steady_clock::now();

  Trajectories reference{DensityTrajectory::constant(m0_first, cfg.h, cfg.steps),
                         DensityTrajectory::constant(m0_second, cfg.h, cfg.steps)};
  IterationReport report;
  std::unique_ptr<Trajectories> previous;

  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  for (std::size_t n = 0;; ++n) {
    const TrajectoryPair frozen = reference.view();
    Trajectories fresh = forward_pass(model, cfg, m0_first, m0_second, &frozen);
    if (observer) observer(n, fresh, reference);

    if (previous) {
      const double residual = density_residual(fresh, *previous);
      report.residuals.push_back(residual);
      report.iterations = report.residuals.size();
      if (residual < fp.tol) {
        report.converged = true;
        report.wall_time_seconds = elapsed();
        return {std::move(fresh), std::move(report)};
      }
      if (report.iterations >= fp.max_iters) {
        report.wall_time_seconds = elapsed();
        std::ostringstream msg;
        msg << "fixed point did not converge in " << fp.max_iters
            << " iterations (last residual " << residual << ")";
        throw NonConvergenceError(msg.str(), std::move(report),
                                  std::make_shared<Trajectories>(std::move(fresh)));
      }
    }

    double keep;
    double take;
    if (fp.method == FixedPointMethod::fictitious_play) {
      const double count = static_cast<double>(n);
      keep = count / (count + 1.0);
      take = 1.0 / (count + 1.0);
    } else {
      keep = 1.0 - fp.damping;
      take = fp.damping;
    }
    reference = Trajectories{detail::mix(reference.first, fresh.first, keep, take),
                             detail::mix(reference.second, fresh.second, keep, take)};
    previous = std::make_unique<Trajectories>(std::move(fresh));
  }
}

}  // namespace fpk
