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


// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. The reference values below are computed here from
// closed forms or brute force, not from the library's own helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fpk.hpp"

namespace {

using fpk::DiscreteDensity;
using fpk::GridSpec;
using fpk::Point;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// d1 between two measures on the same 1D grid: integral of |F_a - F_b|.
double d1(const DiscreteDensity& a, const DiscreteDensity& b) {
  const GridSpec& g = a.grid();
  double fa = 0.0, fb = 0.0, sum = 0.0;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    fa += a[i];
    fb += b[i];
    sum += std::abs(fa - fb) * (g.coord(0, i + 1) - g.coord(0, i));
  }
  return sum;
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

// Exact Gaussian mass of each dual cell [x_i - rho/2, x_i + rho/2] clipped
// to the interval; the end cells also collect the tails.
std::vector<double> gaussian_masses(const GridSpec& g, double mean, double sd) {
  const std::size_t n = g.size();
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = g.coord(0, i);
    const double a = i == 0 ? -INFINITY : x - 0.5 * g.rho();
    const double b = i + 1 == n ? INFINITY : x + 0.5 * g.rho();
    m[i] = (std::isinf(b) ? 1.0 : normal_cdf(b, mean, sd)) -
           (std::isinf(a) ? 0.0 : normal_cdf(a, mean, sd));
  }
  return m;
}

DiscreteDensity from_masses(const GridSpec& g, std::vector<double> m) {
  double total = 0.0;
  for (double v : m) total += v;
  for (double& v : m) v /= total;
  return {g, std::move(m)};
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Coefficients given as plain functions of x, one noise.
struct SmoothModel : fpk::CoefficientModel {
  std::size_t noise_count(std::size_t) const override { return 1; }
  bool depends_on_future() const override { return false; }
  static double b(double x) { return 0.8 * std::sin(3.0 * x) + 0.2; }
  static double s(double x) { return 0.3 + 0.1 * std::cos(2.0 * x); }
  Point drift(std::size_t, const fpk::TrajectoryPair&, const Point& x,
              std::size_t) const override {
    return {b(x[0]), 0.0};
  }
  Point sigma(std::size_t, std::size_t, const fpk::TrajectoryPair&, const Point& x,
              std::size_t) const override {
    return {s(x[0]), 0.0};
  }
};

void chain_consistency() {
  const GridSpec g = GridSpec::interval(-1.0, 1.0, 0.1);
  const double h = 0.01, rho = g.rho();
  const SmoothModel model;
  const auto frozen = fpk::DensityTrajectory::constant(DiscreteDensity::dirac(g, 0), h, 1);
  const fpk::TrajectoryPair coeffs{frozen, frozen};
  double mean_err = 0.0, cov_err = 0.0, matrix_err = 0.0;
  std::size_t checked = 0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double x = g.coord(0, j);
    const double b = SmoothModel::b(x), s = SmoothModel::s(x);
    const double plus = x + h * b + std::sqrt(h) * s, minus = x + h * b - std::sqrt(h) * s;
    if (plus > 1.0 || minus < -1.0) continue;
    ++checked;
    const DiscreteDensity row = fpk::step(model, 0, coeffs, 0, DiscreteDensity::dirac(g, j), h);
    // Oracle row: half the mass to each endpoint, split linearly between nodes.
    std::vector<double> want(g.size(), 0.0);
    for (double y : {plus, minus}) {
      const double u = (y + 1.0) / rho;
      const std::size_t left = std::min<std::size_t>(static_cast<std::size_t>(std::floor(u)),
                                                     g.size() - 2);
      const double frac = u - static_cast<double>(left);
      want[left] += 0.5 * (1.0 - frac);
      want[left + 1] += 0.5 * frac;
    }
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      matrix_err = std::max(matrix_err, std::abs(row[i] - want[i]));
      m1 += row[i] * g.coord(0, i);
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double dx = g.coord(0, i) - x;
      m2 += row[i] * dx * dx;
    }
    mean_err = std::max(mean_err, std::abs(m1 - (x + h * b)));
    cov_err = std::max(cov_err, std::abs(m2 - (h * s * s + h * h * b * b)));
  }
  report(3, checked >= 15 && matrix_err <= 1e-14 && mean_err <= 1e-12 && cov_err <= 2 * rho * rho,
         std::to_string(checked) + " interior nodes, transition matrix error " + fmt(matrix_err) +
             ", mean error " + fmt(mean_err) + " (tol 1e-12), covariance error " + fmt(cov_err) +
             " (tol " + fmt(2 * rho * rho) + ")");
}

DiscreteDensity run_heat(double rho, double h, double final_time, double nu,
                         const std::function<void(std::size_t, const DiscreteDensity&)>& obs = {}) {
  const GridSpec g = GridSpec::interval(-1.0, 1.0, rho);
  const auto model = fpk::linear_model({0.0, 0.0}, {{std::sqrt(2.0 * nu), 0.0}});
  const DiscreteDensity m0 = from_masses(g, gaussian_masses(g, 0.0, 0.1));
  fpk::ForwardOptions opts;
  opts.retention = fpk::Retention::latest;
  if (obs) opts.observer = [&](std::size_t k, const DiscreteDensity& a, const DiscreteDensity&) { obs(k, a); };
  const auto steps = static_cast<std::size_t>(std::llround(final_time / h));
  const fpk::Trajectories t = fpk::solve_explicit(*model, {h, steps}, m0, m0, opts);
  return t.first.slice(steps);
}

void heat_convergence() {
  const double nu = 0.05, T = 0.25;
  std::vector<double> lx, ly;
  std::string detail;
  for (double rho : {1.0 / 40, 1.0 / 80, 1.0 / 160}) {
    const DiscreteDensity m = run_heat(rho, rho, T, nu);
    const auto exact = gaussian_masses(m.grid(), 0.0, std::sqrt(0.01 + 2.0 * nu * T));
    double err = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) err += std::abs(m[i] - exact[i]);
    lx.push_back(std::log(rho));
    ly.push_back(std::log(err));
    detail += "rho=1/" + std::to_string(std::lround(1 / rho)) + " L1=" + fmt(err) + "; ";
  }
  const double order = least_squares_slope(lx, ly);
  report(4, std::abs(order - 1.0) <= 0.3, detail + "observed order " + fmt(order));
}

void ou_moments() {
  fpk::RunConfig c = fpk::preset("ou");
  const auto model = fpk::build_model(c);
  const fpk::SchemeConfig s = c.scheme();
  std::array<DiscreteDensity, 2> m0{fpk::initial_density(c, 0), fpk::initial_density(c, 1)};
  double boundary = 0.0;
  fpk::ForwardOptions opts;
  opts.retention = fpk::Retention::latest;
  opts.observer = [&](std::size_t, const DiscreteDensity& a, const DiscreteDensity& b) {
    for (const DiscreteDensity* d : {&a, &b}) {
      boundary = std::max(boundary, (*d)[0] + (*d)[d->size() - 1]);
    }
  };
  const fpk::Trajectories t = fpk::solve_explicit(*model, s, m0[0], m0[1], opts);
  const double T = s.final_time(), decay = std::exp(-c.theta * T);
  double worst = 0.0;
  std::string detail;
  for (std::size_t pop = 0; pop < 2; ++pop) {
    auto stats = [](const DiscreteDensity& d) {
      double mu = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = d.grid().coord(0, i);
        mu += d[i] * x;
        m2 += d[i] * x * x;
      }
      return std::pair{mu, m2 - mu * mu};
    };
    const auto [mu0, var0] = stats(m0[pop]);
    const auto [mu, var] = stats(t[pop].slice(s.steps));
    const double mu_exact = mu0 * decay;
    const double var_exact = var0 * decay * decay + c.nu / c.theta * (1.0 - decay * decay);
    const double e_mu = std::abs(mu / mu_exact - 1.0), e_var = std::abs(var / var_exact - 1.0);
    worst = std::max({worst, e_mu, e_var});
    detail += "pop " + std::to_string(pop + 1) + " mean " + fmt(mu) + " vs " + fmt(mu_exact) +
              ", var " + fmt(var) + " vs " + fmt(var_exact) + "; ";
  }
  report(5, worst <= 0.02 && boundary <= 1e-6,
         detail + "max relative error " + fmt(worst) + ", max boundary mass " + fmt(boundary));
}

void equicontinuity() {
  const double nu = 0.05, T = 0.25, h = 1.0 / 1024;
  std::vector<double> bound;
  std::string detail;
  for (double rho : {1.0 / 80, 1.0 / 160}) {
    std::vector<DiscreteDensity> slices;
    run_heat(rho, h, T, nu, [&](std::size_t k, const DiscreteDensity& a) {
      if (k % 16 == 0) slices.push_back(a);  // t = j / 64
    });
    double c = 0.0;
    for (std::size_t i = 0; i < slices.size(); ++i) {
      for (std::size_t j = i + 1; j < slices.size(); ++j) {
        c = std::max(c, d1(slices[i], slices[j]) / std::sqrt((j - i) / 64.0));
      }
    }
    bound.push_back(c);
    detail += "rho=1/" + std::to_string(std::lround(1 / rho)) + " C=" + fmt(c) + " (" +
              std::to_string(slices.size()) + " times); ";
  }
  const double growth = bound[1] / bound[0] - 1.0;
  report(6, std::isfinite(bound[1]) && growth < 0.2, detail + "growth " + fmt(growth));
}

void hjb_oracle() {
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GridSpec g = GridSpec::interval(-1.0, 1.0, 0.5);
  auto beta = [&](std::size_t j, double y) {
    return std::max(0.0, 1.0 - std::abs(y - g.coord(0, j)) / g.rho());
  };
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const double h = 0.02 + 0.4 * u(rng), nu = n % 4 == 0 ? 0.0 : u(rng);
    const double a = 0.2 + 3.0 * u(rng);
    const double alpha[3] = {-a, 0.0, a};
    double cost[2][5];
    for (auto& row : cost) {
      for (double& c : row) c = 4.0 * u(rng) - 2.0;
    }
    const fpk::ValueField v = fpk::hjb_backward(
        [&](std::size_t i, std::size_t k) { return cost[k][i]; }, nu,
        fpk::ControlGrid::from_axis_values(1, {-a, 0.0, a}), g, h, 2);
    const double jump = std::sqrt(2.0 * nu * h);
    // Enumerate the first control at the start node and every feedback
    // control at step 1 (one per node).
    for (std::size_t i = 0; i < 5; ++i) {
      const double x = g.coord(0, i);
      double best = std::numeric_limits<double>::infinity();
      for (int c0 = 0; c0 < 3; ++c0) {
        for (int code = 0; code < 243; ++code) {
          double total = h * (0.5 * alpha[c0] * alpha[c0] + cost[0][i]);
          for (double sign : {1.0, -1.0}) {
            const double y = std::clamp(x + h * alpha[c0] + sign * jump, -1.0, 1.0);
            int rest = code;
            for (std::size_t j = 0; j < 5; ++j, rest /= 3) {
              const double aj = alpha[rest % 3];
              total += 0.5 * beta(j, y) * h * (0.5 * aj * aj + cost[1][j]);
            }
          }
          best = std::min(best, total);
        }
      }
      worst = std::max(worst, std::abs(best - v(i, 0)));
    }
  }
  report(12, worst <= 1e-12, "1000 instances, max deviation " + fmt(worst));
}

struct Sample {
  fpk::RunOutcome outcome;
  fpk::RunConfig config;
};

std::map<std::string, Sample> run_presets() {
  std::map<std::string, Sample> runs;
  for (const std::string& name : fpk::preset_names()) {
    fpk::RunConfig c = fpk::preset(name);
    if (name == "species-paper") {
      c.snapshots.clear();
      for (int q = 0; q <= 20; ++q) c.snapshots.push_back(0.25 * q);
    }
    std::cerr << "running " << name << "..." << std::endl;
    runs[name] = {fpk::run_experiment(c, false), c};
  }
  return runs;
}

double overlap(const std::array<DiscreteDensity, 2>& s) {
  double o = 0.0;
  for (std::size_t i = 0; i < s[0].size(); ++i) o += std::min(s[0][i], s[1][i]);
  return o;
}

std::size_t snapshot_index(const Sample& s, double t) {
  const auto& times = s.outcome.snapshot_times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) < 1e-12) return i;
  }
  throw std::runtime_error("missing snapshot");
}

std::pair<double, double> centre_of_mass(const DiscreteDensity& d) {
  double x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Point p = d.grid().coord(i);
    x += d[i] * p[0];
    y += d[i] * p[1];
  }
  return {x, y};
}

void species_motion(const Sample& run, int id, bool informational) {
  const auto& snaps = run.outcome.snapshots;
  const auto& times = run.outcome.snapshot_times;
  // Allowed wrong-way drift: 5% of the coordinate range in the box.
  const double slack = 0.05 * (run.config.hi - run.config.lo);
  double worst_x = 0.0, worst_y = 0.0;
  std::ostringstream path;
  for (std::size_t s = 0; s < snaps.size(); ++s) {
    const auto [x, y] = centre_of_mass(snaps[s][1]);
    if (s % 4 == 0) path << "t=" << times[s] << " (" << fmt(x) << "," << fmt(y) << ") ";
    if (times[s] < 0.5 - 1e-12) continue;
    for (std::size_t r = s + 1; r < snaps.size(); ++r) {
      const auto [x2, y2] = centre_of_mass(snaps[r][1]);
      worst_x = std::max(worst_x, x2 - x);
      worst_y = std::max(worst_y, y - y2);
    }
  }
  auto dist = [&](double t) {
    const auto& p = snaps[snapshot_index(run, t)];
    const auto [ax, ay] = centre_of_mass(p[0]);
    const auto [bx, by] = centre_of_mass(p[1]);
    return std::hypot(ax - bx, ay - by);
  };
  const double d0 = dist(0.0), d1v = dist(1.0);
  const bool ok = worst_x <= slack && worst_y <= slack && d1v < d0 && run.outcome.exit_code == 0;
  const std::string detail = "m2 centre of mass " + path.str() + "; largest wrong-way moves x1 +" +
                             fmt(worst_x) + ", x2 -" + fmt(worst_y) + " (slack " + fmt(slack) +
                             "); COM distance t=0 " + fmt(d0) + ", t=1 " + fmt(d1v);
  if (informational) {
    std::cout << "note: literal kernel normalization would " << (ok ? "pass" : "fail") << ": "
              << detail << std::endl;
  } else {
    report(id, ok, detail);
  }
}

}  // namespace

int main() {
  chain_consistency();
  heat_convergence();
  ou_moments();
  equicontinuity();
  hjb_oracle();

  const auto runs = run_presets();

  double defect = 0.0, lowest = 0.0;
  bool all_ok = true;
  for (const auto& [name, s] : runs) {
    defect = std::max(defect, s.outcome.audit.max_defect);
    lowest = std::min(lowest, s.outcome.audit.min_mass);
    all_ok = all_ok && s.outcome.exit_code == 0;
  }
  report(1, all_ok && defect <= 1e-12,
         std::to_string(runs.size()) + " presets, max |total mass - 1| = " + fmt(defect));
  report(2, all_ok && lowest >= 0.0, "smallest mass over all presets and steps " + fmt(lowest));

  {
    const Sample& s = runs.at("mfg-paper-nu005");
    const GridSpec& g = s.outcome.snapshots.at(0)[0].grid();
    double worst = 0.0;
    for (const auto& snap : s.outcome.snapshots) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        worst = std::max(worst, std::abs(snap[0].density(i) - snap[1].density(g.mirror(i))));
      }
    }
    report(7, s.outcome.exit_code == 0 && worst <= 1e-8,
           std::to_string(s.outcome.snapshots.size()) + " output times, max mirror gap " +
               fmt(worst));
    const auto& m = s.outcome.snapshots;
    const double d23 = d1(m[snapshot_index(s, 2)][0], m[snapshot_index(s, 3)][0]);
    const double d02 = d1(m[snapshot_index(s, 0)][0], m[snapshot_index(s, 2)][0]);
    report(8, d23 <= 0.1 * d02, "d1(m1(2), m1(3)) = " + fmt(d23) + ", 0.1 d1(m1(0), m1(2)) = " +
                                    fmt(0.1 * d02));
  }

  {
    bool ok = true;
    std::string detail;
    for (const char* name : {"mfg-paper-nu005", "mfg-paper-nu0001", "mfg-paper-nu0"}) {
      const Sample& s = runs.at(name);
      const auto& snaps = s.outcome.snapshots;
      const double o0 = overlap(snaps.at(snapshot_index(s, 0.0)));
      const auto& last = snaps.at(snapshot_index(s, s.config.final_time));
      const double oT = overlap(last);
      ok = ok && s.outcome.exit_code == 0 && oT <= 0.5 * o0;
      detail += std::string(name) + " O(0)=" + fmt(o0) + " O(T)=" + fmt(oT) + "; ";
      if (std::string(name) == "mfg-paper-nu0") {
        std::size_t shared = 0;
        for (std::size_t i = 0; i < last[0].size(); ++i) {
          if (last[0].density(i) > 1e-3 && last[1].density(i) > 1e-3) ++shared;
        }
        ok = ok && shared == 0;
        detail += "nu=0 nodes in both supports: " + std::to_string(shared);
      }
    }
    report(9, ok, detail);
  }

  species_motion(runs.at("species-paper"), 10, false);

  {
    bool ok = true;
    std::string detail;
    for (const char* name : {"mfg-paper-nu005", "mfg-paper-nu0001", "mfg-paper-nu0"}) {
      const auto& it = runs.at(name).outcome.iterations;
      const auto& r = runs.at(name).outcome.report;
      const bool good = it && it->converged && it->iterations <= 200 &&
                        it->residuals.back() < 5e-3 &&
                        r.at("iteration_report").at("residuals").size() == it->iterations;
      ok = ok && good;
      detail += std::string(name) + ": " +
                (it ? std::to_string(it->iterations) + " iterations, last residual " +
                          fmt(it->residuals.back())
                    : "no report") +
                "; ";
    }
    report(11, ok, detail);
  }

  {
    fpk::RunConfig c = fpk::preset("species-paper");
    c.species.kernel.normalization = fpk::KernelNormalization::paper_literal;
    c.snapshots.clear();
    for (int q = 0; q <= 20; ++q) c.snapshots.push_back(0.25 * q);
    std::cerr << "running species-paper with literal kernel normalization..." << std::endl;
    species_motion({fpk::run_experiment(c, false), c}, 10, true);
  }

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
