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

// Grid-refinement studies: L1 errors of the density against an exact
// solution (linear models) or against a finer reference run.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <vector>

#include "fpk/config.hpp"
#include "fpk/experiment.hpp"
#include "fpk/lattice.hpp"
#include "fpk/measure.hpp"
#include "fpk/transport.hpp"

namespace fpk {

/// Exact mass of the normal law N(mean, std^2) in each clipped dual cell
/// [x_i - rho/2, x_i + rho/2] of a 1D grid.
inline std::vector<double> gaussian_cell_masses(const GridSpec& g, double mean, double std) {
  if (g.dim() != 1) throw UnsupportedOperationError("gaussian_cell_masses is 1D only");
  const auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (std * std::sqrt(2.0))); };
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double a = std::max(g.lo(0), g.coord(0, i) - 0.5 * g.rho());
    const double b = std::min(g.hi(0), g.coord(0, i) + 0.5 * g.rho());
    out[i] = cdf(b) - cdf(a);
  }
  return out;
}

/// sum_i |a_i - b_i| over node masses.
inline double l1_mass_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("l1_mass_error: size mismatch");
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e += std::abs(a[i] - b[i]);
  return e;
}

/// Deposits the masses of a fine density onto a coarser grid with the Q1
/// basis (mass preserving).
inline DiscreteDensity restrict_to(const DiscreteDensity& fine, const GridSpec& coarse) {
  std::vector<double> out(coarse.size(), 0.0);
  const GridSpec& g = fine.grid();
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (fine[j] == 0.0) continue;
    for (const NodeWeight& nw : basis_weights(coarse, g.coord(j))) out[nw.node] += fine[j] * nw.weight;
  }
  double total = 0.0;
  for (double m : out) total += m;
  for (double& m : out) m /= total;
  return {coarse, std::move(out)};
}

struct ConvergenceRow {
  double rho = 0.0;
  double h = 0.0;
  std::size_t steps = 0;
  double error = 0.0;
  std::optional<double> rate;  // log2(previous error / error)
};

/// A refinement study: configuration at level 0, how to refine it, and the
/// exact final-time masses when known.
struct ConvergenceCase {
  std::string name;
  RunConfig base;
  bool refine_h_with_rho = true;  // h proportional to rho (else step rule)
  std::function<std::vector<double>(const GridSpec&, std::size_t pop)> exact;
};

inline std::vector<std::string> convergence_case_names() {
  return {"heat", "frozen", "ou", "species"};
}

inline ConvergenceCase convergence_case(const std::string& name) {
  ConvergenceCase cc;
  cc.name = name;
  if (name == "heat") {
    cc.base = preset("heat");
    cc.base.rho_first = cc.base.rho_second = 1.0 / 40.0;
    cc.base.h = 1.0 / 40.0;
    cc.base.snapshots = {};
    const double var = cc.base.initial_std * cc.base.initial_std + 2.0 * cc.base.nu * cc.base.final_time;
    const RunConfig c = cc.base;
    cc.exact = [c, var](const GridSpec& g, std::size_t pop) {
      const Point& m = pop == 0 ? c.centre_first : c.centre_second;
      return gaussian_cell_masses(g, m[0] + c.drift[0] * c.final_time, std::sqrt(var));
    };
    return cc;
  }
  if (name == "frozen") {
    cc.base = preset("heat");
    cc.base.preset = "frozen";
    cc.base.nu = 0.0;
    cc.base.rho_first = cc.base.rho_second = 1.0 / 40.0;
    cc.base.h = 1.0 / 40.0;
    cc.base.snapshots = {};
    const RunConfig c = cc.base;
    cc.exact = [c](const GridSpec& g, std::size_t pop) {
      RunConfig at = c;
      at.rho_first = at.rho_second = g.rho();
      const DiscreteDensity d = initial_density(at, pop);
      return std::vector<double>(d.mass().begin(), d.mass().end());
    };
    return cc;
  }
  if (name == "ou") {
    cc.base = preset("ou");
    cc.base.rho_first = cc.base.rho_second = 1.0 / 40.0;
    cc.base.h = 1.0 / 40.0;
    cc.base.snapshots = {};
    const RunConfig c = cc.base;
    cc.exact = [c](const GridSpec& g, std::size_t pop) {
      const double decay = std::exp(-c.theta * c.final_time);
      const double s0 = c.initial_std * c.initial_std;
      const double var = s0 * decay * decay + c.nu / c.theta * (1.0 - decay * decay);
      const Point& m = pop == 0 ? c.centre_first : c.centre_second;
      return gaussian_cell_masses(g, m[0] * decay, std::sqrt(var));
    };
    return cc;
  }
  if (name == "species") {
    cc.base = preset("species-paper");
    cc.base.preset = "species";
    cc.base.rho_first = cc.base.rho_second = 0.1;
    cc.base.final_time = 0.5;
    cc.base.species.kernel.bandwidth = 0.1;
    cc.base.snapshots = {};
    cc.refine_h_with_rho = false;
    return cc;
  }
  throw ConfigError("unknown convergence preset '" + name + "' (expected heat, frozen, ou or species)");
}

inline RunConfig refined(const ConvergenceCase& cc, std::size_t level) {
  RunConfig c = cc.base;
  const double f = std::ldexp(1.0, -static_cast<int>(level));
  c.rho_first *= f;
  c.rho_second *= f;
  if (cc.refine_h_with_rho && c.h) c.h = *c.h * f;
  c.snapshots = {c.final_time};
  return c;
}

/// Final-time slices of a run (both populations).
inline std::array<DiscreteDensity, 2> final_slices(const RunConfig& c) {
  RunOutcome o = run_experiment(c, false);
  if (o.exit_code != 0) throw Error("convergence run failed: " + o.message);
  return o.snapshots.back();
}

/// Runs `levels` refinements. Cases with an exact solution report the error
/// against it; the others against one additional finer level.
inline std::vector<ConvergenceRow> convergence_study(const ConvergenceCase& cc, std::size_t levels) {
  if (levels < 2) throw ConfigError("convergence needs at least 2 levels");
  std::vector<ConvergenceRow> rows;
  std::optional<std::array<DiscreteDensity, 2>> reference;
  if (!cc.exact) reference = final_slices(refined(cc, levels));
  for (std::size_t l = 0; l < levels; ++l) {
    const RunConfig c = refined(cc, l);
    const SchemeConfig s = c.scheme();
    const auto got = final_slices(c);
    double err = 0.0;
    for (std::size_t pop = 0; pop < 2; ++pop) {
      const GridSpec g = c.grid(pop);
      std::vector<double> want;
      if (cc.exact) {
        want = cc.exact(g, pop);
      } else {
        const DiscreteDensity r = restrict_to((*reference)[pop], g);
        want.assign(r.mass().begin(), r.mass().end());
      }
      err = std::max(err, l1_mass_error(got[pop].mass(), want));
    }
    ConvergenceRow row{c.rho_first, s.h, s.steps, err, std::nullopt};
    if (!rows.empty() && rows.back().error > 0.0 && err > 0.0) {
      row.rate = std::log2(rows.back().error / err);
    }
    rows.push_back(row);
  }
  return rows;
}

/// Least-squares slope of log(error) against log(1/rho): the observed order
/// over the whole table. Empty when some error is zero.
inline std::optional<double> observed_order(const std::vector<ConvergenceRow>& rows) {
  std::vector<double> xs, ys;
  for (const ConvergenceRow& r : rows) {
    if (!(r.error > 0.0)) return std::nullopt;
    xs.push_back(-std::log(r.rho));
    ys.push_back(std::log(r.error));
  }
  if (xs.size() < 2) return std::nullopt;
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline void print_convergence(std::ostream& os, const std::string& name,
                              const std::vector<ConvergenceRow>& rows) {
  os << "convergence " << name << " (L1 error of node masses at T)\n";
  os << "rho,h,steps,l1_error,rate\n";
  for (const ConvergenceRow& r : rows) {
    os << format_double(r.rho) << ',' << format_double(r.h) << ',' << r.steps << ','
       << format_double(r.error) << ',' << (r.rate ? format_double(*r.rate) : std::string("-"))
       << '\n';
  }
  const std::optional<double> order = observed_order(rows);
  os << "observed order (least squares): " << (order ? format_double(*order) : std::string("-"))
     << '\n';
}

}  // namespace fpk
