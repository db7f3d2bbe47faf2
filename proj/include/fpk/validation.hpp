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

// Built-in analytic checks run by `fpk validate`. Every check is
// deterministic, so two runs print identical reports.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fpk/config.hpp"
#include "fpk/convergence.hpp"
#include "fpk/experiment.hpp"
#include "fpk/hjb.hpp"
#include "fpk/measure.hpp"
#include "fpk/models.hpp"
#include "fpk/transport.hpp"

namespace fpk {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationOptions {
  // Mutation smoke test: flips the sign of the OU restoring drift.
  bool inject_drift_sign_fault = false;
};

namespace validation {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::scientific << v;
  return os.str();
}

/// Column j of the one-step transition matrix: the image of a unit mass at
/// node j.
inline std::vector<double> transition_row(const CoefficientModel& model, const GridSpec& g,
                                          std::size_t j, double h) {
  const DiscreteDensity d = DiscreteDensity::dirac(g, j);
  DensityTrajectory t(g, h);
  t.append(d);
  const TrajectoryPair view{t, t};
  const DiscreteDensity next = step(model, 0, view, 0, d, h);
  return {next.mass().begin(), next.mass().end()};
}

inline CheckResult partition_of_unity() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (std::size_t dim = 1; dim <= 2; ++dim) {
    const GridSpec g = dim == 1 ? GridSpec::interval(-1.0, 1.0, 0.1) : GridSpec::square(-1.0, 1.0, 0.1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int s = 0; s < 2000; ++s) {
      const Point x{u(rng), dim == 2 ? u(rng) : 0.0};
      double sum = 0.0;
      Point centroid{};
      for (const NodeWeight& nw : basis_weights(g, x)) {
        sum += nw.weight;
        const Point c = g.coord(nw.node);
        for (std::size_t a = 0; a < dim; ++a) centroid[a] += nw.weight * c[a];
      }
      worst = std::max(worst, std::abs(sum - 1.0));
      for (std::size_t a = 0; a < dim; ++a) worst = std::max(worst, std::abs(centroid[a] - x[a]));
    }
  }
  return {"partition-of-unity", worst <= 1e-13,
          "max |sum beta - 1|, |sum beta x_i - x| = " + fmt(worst)};
}

inline CheckResult chain_consistency() {
  const GridSpec g = GridSpec::interval(-1.0, 1.0, 0.1);
  const double h = 0.01;
  const auto b = [](const Point& x, double) { return Point{0.5 * std::sin(2.0 * x[0]), 0.0}; };
  const auto s = [](const Point& x, double) { return Point{0.3 + 0.1 * std::cos(x[0]), 0.0}; };
  const FieldModel model(b, {s}, h);
  double mean_err = 0.0;
  double cov_err = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const Point x = g.coord(j);
    const double bj = b(x, 0.0)[0];
    const double sj = s(x, 0.0)[0];
    if (!g.contains({x[0] + h * bj + std::sqrt(h) * sj, 0.0}, 0.0) ||
        !g.contains({x[0] + h * bj - std::sqrt(h) * sj, 0.0}, 0.0)) {
      continue;
    }
    ++used;
    const std::vector<double> row = transition_row(model, g, j, h);
    double mean = 0.0;
    double second = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double dx = g.coord(0, i) - x[0];
      mean += row[i] * dx;
      second += row[i] * dx * dx;
    }
    mean_err = std::max(mean_err, std::abs(mean - h * bj));
    cov_err = std::max(cov_err, std::abs(second - (h * sj * sj + h * h * bj * bj)));
  }
  const double rho2 = g.rho() * g.rho();
  return {"chain-consistency", used > 0 && mean_err <= 1e-12 && cov_err <= 2.0 * rho2,
          std::to_string(used) + " interior nodes, mean err " + fmt(mean_err) +
              ", covariance err " + fmt(cov_err) + " (limit " + fmt(2.0 * rho2) + ")"};
}

inline CheckResult heat_kernel_order(std::vector<RunOutcome>* audit) {
  const ConvergenceCase cc = convergence_case("heat");
  std::vector<ConvergenceRow> rows;
  std::string errs;
  for (std::size_t l = 0; l < 3; ++l) {
    RunConfig c = refined(cc, l);
    RunOutcome o = run_experiment(c, false);
    const std::vector<double> want = cc.exact(c.grid(0), 0);
    const double e = l1_mass_error(o.snapshots.back()[0].mass(), want);
    rows.push_back({c.rho_first, c.scheme().h, c.scheme().steps, e, std::nullopt});
    errs += (l ? ", " : "") + fmt(e);
    if (audit) audit->push_back(std::move(o));
  }
  const auto order = observed_order(rows);
  const bool ok = order && *order >= 0.7 && *order <= 1.3;
  return {"heat-kernel-order", ok,
          "L1 errors " + errs + ", observed order " + (order ? fmt(*order) : std::string("-"))};
}

inline CheckResult ou_moments(const ValidationOptions& opt, std::vector<RunOutcome>* audit) {
  RunConfig c = preset("ou");
  if (opt.inject_drift_sign_fault) c.theta = -c.theta;
  c.snapshots = {c.final_time};
  RunOutcome o = run_experiment(c, false);
  const double theta = preset("ou").theta;
  const double t = c.final_time;
  const double decay = std::exp(-theta * t);
  const double s0 = c.initial_std * c.initial_std;
  const double var = s0 * decay * decay + c.nu / theta * (1.0 - decay * decay);
  double worst = 0.0;
  double boundary = 0.0;
  for (std::size_t pop = 0; pop < 2; ++pop) {
    const DiscreteDensity& d = o.snapshots.back()[pop];
    const Moments m = moments(d);
    const double mean = (pop == 0 ? c.centre_first : c.centre_second)[0] * decay;
    const double v = m.covariance[0][0];
    worst = std::max(worst, std::abs(m.mean[0] - mean) / std::abs(mean));
    worst = std::max(worst, std::abs(v - var) / var);
    boundary = std::max(boundary, d[0] + d[d.size() - 1]);
  }
  if (audit) audit->push_back(std::move(o));
  return {"ou-moments", worst <= 0.02 && boundary <= 1e-6,
          "max relative moment error " + fmt(worst) + ", boundary mass " + fmt(boundary)};
}

/// max over dyadic pairs s < t of d1(m(t), m(s)) / sqrt(t - s).
inline double equicontinuity_constant(const RunOutcome& o) {
  double c = 0.0;
  for (std::size_t a = 0; a < o.snapshot_times.size(); ++a) {
    for (std::size_t b = a + 1; b < o.snapshot_times.size(); ++b) {
      const double dt = o.snapshot_times[b] - o.snapshot_times[a];
      const double d = wasserstein1_1d(o.snapshots[a][0], o.snapshots[b][0]);
      c = std::max(c, d / std::sqrt(dt));
    }
  }
  return c;
}

inline CheckResult equicontinuity(std::vector<RunOutcome>* audit) {
  std::vector<double> bounds;
  for (double rho : {1.0 / 80.0, 1.0 / 160.0}) {
    RunConfig c = preset("heat");
    c.rho_first = c.rho_second = rho;
    c.h = rho;
    c.snapshots.clear();
    for (int j = 0; j <= 16; ++j) c.snapshots.push_back(c.final_time * j / 16.0);
    RunOutcome o = run_experiment(c, false);
    bounds.push_back(equicontinuity_constant(o));
    if (audit) audit->push_back(std::move(o));
  }
  const double growth = bounds[1] / bounds[0] - 1.0;
  return {"equicontinuity", std::isfinite(bounds[0]) && growth < 0.2,
          "bounds " + fmt(bounds[0]) + " -> " + fmt(bounds[1]) + ", growth " + fmt(growth)};
}

inline CheckResult d1_metric() {
  const GridSpec g = GridSpec::interval(0.0, 1.0, 0.05);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto random_density = [&] {
    std::vector<double> m(g.size());
    double s = 0.0;
    for (double& v : m) s += (v = u(rng) * u(rng));
    for (double& v : m) v /= s;
    return DiscreteDensity(g, std::move(m));
  };
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const DiscreteDensity a = random_density(), b = random_density(), c = random_density();
    const double ab = wasserstein1_1d(a, b);
    worst = std::max(worst, wasserstein1_1d(a, a));
    worst = std::max(worst, std::abs(ab - wasserstein1_1d(b, a)));
    worst = std::max(worst, ab - wasserstein1_1d(a, c) - wasserstein1_1d(c, b));
    worst = std::max(worst, ab - 1.0);
  }
  for (std::size_t i = 0; i < g.size(); i += 3) {
    for (std::size_t j = 0; j < g.size(); j += 4) {
      const double d = wasserstein1_1d(DiscreteDensity::dirac(g, i), DiscreteDensity::dirac(g, j));
      worst = std::max(worst, std::abs(d - std::abs(g.coord(0, i) - g.coord(0, j))));
    }
  }
  return {"d1-metric", worst <= 1e-12, "max axiom violation " + fmt(worst)};
}

/// Value of a 2-step problem on a 5-node grid found by trying every
/// first control together with every assignment of second-step controls
/// to nodes.
inline CheckResult hjb_oracle(int instances) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GridSpec g = GridSpec::interval(0.0, 1.0, 0.25);
  double worst = 0.0;
  for (int n = 0; n < instances; ++n) {
    const double h = 0.05 + 0.25 * u(rng);
    const double nu = u(rng) < 0.2 ? 0.0 : 0.5 * u(rng);
    const double a = 0.5 + 2.5 * u(rng);
    const ControlGrid controls = ControlGrid::from_axis_values(1, {-a, 0.0, a});
    double cost[5][2];
    for (auto& row : cost) {
      for (double& c : row) c = 2.0 * u(rng) - 1.0;
    }
    const ValueField v = hjb_backward([&](std::size_t i, std::size_t k) { return cost[i][k]; },
                                      nu, controls, g, h, 2);
    const double alpha[3] = {-a, 0.0, a};
    const double jump = std::sqrt(2.0 * nu * h);
    const auto hat = [](double y, double xi) { return std::max(0.0, 1.0 - std::abs(y - xi) / 0.25); };
    for (std::size_t i = 0; i < 5; ++i) {
      const double xi = 0.25 * static_cast<double>(i);
      double best0 = INFINITY;
      for (int c0 = 0; c0 < 3; ++c0) {
        for (int code = 0; code < 243; ++code) {
          int pick[5];
          for (int j = 0, rest = code; j < 5; ++j, rest /= 3) pick[j] = rest % 3;
          double total = h * (0.5 * alpha[c0] * alpha[c0] + cost[i][0]);
          for (double sign : {-1.0, 1.0}) {
            const double y = std::clamp(xi + h * alpha[c0] + sign * jump, 0.0, 1.0);
            for (std::size_t j = 0; j < 5; ++j) {
              const double w = hat(y, 0.25 * static_cast<double>(j));
              const double aj = alpha[pick[j]];
              total += 0.5 * w * h * (0.5 * aj * aj + cost[j][1]);
            }
          }
          best0 = std::min(best0, total);
        }
      }
      worst = std::max(worst, std::abs(best0 - v(i, 0)));
      double best1 = INFINITY;
      for (double aj : alpha) best1 = std::min(best1, h * (0.5 * aj * aj + cost[i][1]));
      worst = std::max(worst, std::abs(best1 - v(i, 1)));
    }
  }
  return {"hjb-oracle", worst <= 1e-12,
          std::to_string(instances) + " instances, max deviation " + fmt(worst)};
}

inline CheckResult simplex(const std::vector<RunOutcome>& runs) {
  double defect = 0.0;
  double min_mass = INFINITY;
  for (const RunOutcome& o : runs) {
    defect = std::max(defect, o.audit.max_defect);
    min_mass = std::min(min_mass, o.audit.min_mass);
  }
  return {"mass-and-sign", defect <= kMassTolerance && min_mass >= 0.0,
          std::to_string(runs.size()) + " runs, max |1 - sum m| " + fmt(defect) + ", min mass " +
              fmt(min_mass)};
}

inline std::string final_csv(const RunConfig& c, int threads) {
  const std::string saved = std::getenv("FPK_THREADS") ? std::getenv("FPK_THREADS") : "";
  ::setenv("FPK_THREADS", std::to_string(threads).c_str(), 1);
  RunOutcome o = run_experiment(c, false);
  if (saved.empty()) {
    ::unsetenv("FPK_THREADS");
  } else {
    ::setenv("FPK_THREADS", saved.c_str(), 1);
  }
  std::ostringstream os;
  for (const auto& d : o.snapshots.back()) write_density_csv(os, d);
  return os.str();
}

inline CheckResult thread_determinism() {
  RunConfig c = preset("species-paper");
  c.final_time = 0.01;
  c.snapshots = {c.final_time};
  const std::string one = final_csv(c, 1);
  const std::string many = final_csv(c, 4);
  return {"thread-determinism", one == many,
          std::to_string(one.size()) + " CSV bytes, 1 vs 4 threads " +
              (one == many ? "identical" : "differ")};
}

}  // namespace validation

inline std::vector<CheckResult> run_validation(const ValidationOptions& opt = {}) {
  std::vector<RunOutcome> runs;
  std::vector<CheckResult> out;
  out.push_back(validation::partition_of_unity());
  out.push_back(validation::chain_consistency());
  out.push_back(validation::heat_kernel_order(&runs));
  out.push_back(validation::ou_moments(opt, &runs));
  out.push_back(validation::equicontinuity(&runs));
  out.push_back(validation::simplex(runs));
  out.push_back(validation::d1_metric());
  out.push_back(validation::hjb_oracle(200));
  out.push_back(validation::thread_determinism());
  return out;
}

/// Prints one line per check; returns true when all passed.
inline bool print_validation(std::ostream& os, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const CheckResult& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  os << (all ? "all checks passed" : "some checks failed") << '\n';
  return all;
}

}  // namespace fpk
