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

// Builds models and initial data from a RunConfig, runs the solver and
// writes snapshot CSV / PGM files and report.json.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpk/config.hpp"
#include "fpk/coupling.hpp"
#include "fpk/measure.hpp"
#include "fpk/models.hpp"
#include "fpk/transport.hpp"

namespace fpk {

/// Initial density functions of the built-in experiments.
namespace initial {

/// [0.2 - (x1 - a)^2 - (x2 - b)^2 / 2]_+^2 (unnormalized).
inline double species_bump(const Point& x, double a, double b) {
  const double r = 0.2 - (x[0] - a) * (x[0] - a) - 0.5 * (x[1] - b) * (x[1] - b);
  return r > 0.0 ? r * r : 0.0;
}

inline double species_first(const Point& x) { return species_bump(x, 0.5, -0.5); }
inline double species_second(const Point& x) { return species_bump(x, -0.5, 0.5); }

/// 3/4 + 1/2 on [-1/2,-1/4] u [0,1/4].
inline double mfg_first(const Point& x) {
  const double y = x[0];
  const bool high = (y >= -0.5 && y <= -0.25) || (y >= 0.0 && y <= 0.25);
  return 0.75 + (high ? 0.5 : 0.0);
}

/// 3/4 + 1/2 on [-1/4,0] u [1/4,1/2]; the mirror image of mfg_first.
inline double mfg_second(const Point& x) {
  const double y = x[0];
  const bool high = (y >= -0.25 && y <= 0.0) || (y >= 0.25 && y <= 0.5);
  return 0.75 + (high ? 0.5 : 0.0);
}

}  // namespace initial

inline DiscreteDensity initial_density(const RunConfig& c, std::size_t pop) {
  const GridSpec g = c.grid(pop);
  switch (c.initial) {
    case InitialKind::species_paper:
      return from_initial(g, pop == 0 ? initial::species_first : initial::species_second);
    case InitialKind::mfg_paper:
      return from_initial(g, pop == 0 ? initial::mfg_first : initial::mfg_second);
    case InitialKind::uniform:
      return from_initial(g, [](const Point&) { return 1.0; });
    case InitialKind::gaussian:
      break;
  }
  const Point centre = pop == 0 ? c.centre_first : c.centre_second;
  const double s2 = c.initial_std * c.initial_std;
  return from_initial(g, [&](const Point& x) {
    double r2 = 0.0;
    for (std::size_t a = 0; a < g.dim(); ++a) r2 += (x[a] - centre[a]) * (x[a] - centre[a]);
    return std::exp(-r2 / (2.0 * s2));
  });
}

inline std::unique_ptr<CoefficientModel> build_model(const RunConfig& c) {
  switch (c.model) {
    case ModelKind::linear:
      return linear_model(c.drift, isotropic_columns(c.dim, c.nu));
    case ModelKind::ou:
      return ou_model(c.dim, c.theta, c.nu, c.scheme().h);
    case ModelKind::species:
      return std::make_unique<SpeciesModel>(c.species);
    case ModelKind::mfg:
      return mfg_model(c.mfg, c.dim);
  }
  throw ConfigError("unknown model");
}

/// Collects the measures mu(t) at requested times from a stream of slices.
class SnapshotRecorder {
 public:
  SnapshotRecorder(std::vector<double> times, double h, std::size_t steps)
      : times_(std::move(times)), h_(h), steps_(steps), taken_(times_.size()) {}

  void operator()(std::size_t k, const DiscreteDensity& a, const DiscreteDensity& b) {
    for (std::size_t s = 0; s < times_.size(); ++s) {
      if (taken_[s]) continue;
      const TimeWeight tw = time_weight(h_, steps_, times_[s]);
      if (tw.lambda == 0.0 && tw.k == k) {
        taken_[s] = std::array<DiscreteDensity, 2>{a, b};
      } else if (tw.lambda > 0.0 && tw.k + 1 == k && prev_) {
        taken_[s] = std::array<DiscreteDensity, 2>{blend((*prev_)[0], a, tw.lambda),
                                                   blend((*prev_)[1], b, tw.lambda)};
      }
    }
    prev_ = std::array<DiscreteDensity, 2>{a, b};
  }

  void record_from(const Trajectories& t) {
    for (std::size_t s = 0; s < times_.size(); ++s) {
      taken_[s] = std::array<DiscreteDensity, 2>{blend(t.first, times_[s]),
                                                 blend(t.second, times_[s])};
    }
  }

  const std::vector<double>& times() const { return times_; }
  const DiscreteDensity& at(std::size_t s, std::size_t pop) const { return taken_.at(s)->at(pop); }

 private:
  std::vector<double> times_;
  double h_;
  std::size_t steps_;
  std::vector<std::optional<std::array<DiscreteDensity, 2>>> taken_;
  std::optional<std::array<DiscreteDensity, 2>> prev_;
};

/// Tracks the simplex invariants over every produced slice.
struct MassAudit {
  double max_defect = 0.0;
  double min_mass = std::numeric_limits<double>::infinity();

  void observe(const DiscreteDensity& d) {
    max_defect = std::max(max_defect, std::abs(1.0 - d.total()));
    for (double m : d.mass()) min_mass = std::min(min_mass, m);
  }

  void observe(const Trajectories& t) {
    for (std::size_t pop = 0; pop < 2; ++pop) {
      for (std::size_t k = 0; k < t[pop].size(); ++k) {
        if (t[pop].retains(k)) observe(t[pop].slice(k));
      }
    }
  }
};

/// Binary 8-bit PGM of a 2D density: columns follow axis 0, rows follow
/// axis 1 from top (hi) to bottom (lo); grey = round(255 density / max).
inline void write_density_pgm(std::ostream& os, const DiscreteDensity& a, double max_density) {
  const GridSpec& g = a.grid();
  if (g.dim() != 2) throw UnsupportedOperationError("PGM output needs a 2D grid");
  const std::size_t w = g.nodes(0);
  const std::size_t hgt = g.nodes(1);
  os << "P5\n# density min=0 max=" << format_double(max_density) << "\n"
     << w << ' ' << hgt << "\n255\n";
  for (std::size_t row = 0; row < hgt; ++row) {
    const std::size_t j = hgt - 1 - row;
    for (std::size_t i = 0; i < w; ++i) {
      const double d = a.density(g.flat({i, j}));
      const double scaled = max_density > 0.0 ? 255.0 * d / max_density : 0.0;
      os.put(static_cast<char>(static_cast<std::uint8_t>(
          std::clamp(std::round(scaled), 0.0, 255.0))));
    }
  }
}

struct RunOutcome {
  int exit_code = 0;
  std::string message;
  nlohmann::json report;
  std::optional<IterationReport> iterations;
  MassAudit audit;
  std::vector<double> snapshot_times;
  std::vector<std::array<DiscreteDensity, 2>> snapshots;
};

inline nlohmann::json describe(const RunConfig& c, const SchemeConfig& s) {
  nlohmann::json p;
  p["preset"] = c.preset;
  const char* models[] = {"linear", "ou", "species", "mfg"};
  p["model"] = models[static_cast<int>(c.model)];
  p["grid"] = {{"dim", c.dim}, {"lo", c.lo}, {"hi", c.hi},
               {"rho1", c.rho_first}, {"rho2", c.rho_second}};
  p["time"] = {{"T", c.final_time}, {"h", s.h}, {"steps", s.steps}};
  switch (c.model) {
    case ModelKind::linear:
      p["linear"] = {{"drift", {c.drift[0], c.drift[1]}}, {"nu", c.nu}};
      break;
    case ModelKind::ou:
      p["ou"] = {{"theta", c.theta}, {"nu", c.nu}};
      break;
    case ModelKind::species:
      p["species"] = {{"delta", c.species.kernel.bandwidth},
                      {"truncation", c.species.kernel.truncation},
                      {"normalization", c.species.kernel.normalization ==
                                                KernelNormalization::unit_mass
                                            ? "unit-mass"
                                            : "paper-literal"}};
      break;
    case ModelKind::mfg:
      p["mfg"] = {{"nu", c.mfg.nu},
                  {"eta", c.mfg.eta},
                  {"delta", c.mfg.density_kernel.bandwidth},
                  {"epsilon", c.mfg.epsilon},
                  {"ratio", c.mfg.ratio_threshold},
                  {"crowd", c.mfg.crowd_cap},
                  {"control_cap", c.mfg.control_cap},
                  {"control_spacing", c.mfg.control_spacing}};
      p["fixed_point"] = {
          {"method", c.fixed_point.method == FixedPointMethod::fictitious_play
                         ? "fictitious-play"
                         : "picard"},
          {"damping", c.fixed_point.damping},
          {"tol", c.fixed_point.tol},
          {"max_iters", c.fixed_point.max_iters}};
      break;
  }
  return p;
}

/// Runs an experiment. Output files go to `c.output_dir` unless `write` is
/// false. Exit codes: 0 ok, 3 fixed point not converged, 4 numeric failure.
inline RunOutcome run_experiment(const RunConfig& c, bool write = true,
                                 std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  RunOutcome out;
  c.validate();
  const SchemeConfig scheme = [&] {
    SchemeConfig s = c.scheme();
    s.boundary = c.boundary;
    return s;
  }();
  if (log && scheme.coarse_in_time(std::max(c.rho_first, c.rho_second))) {
    *log << "warning: h = " << scheme.h << " exceeds rho^{3/2}; expect accuracy loss near the boundary\n";
  }

  const DiscreteDensity m0_first = initial_density(c, 0);
  const DiscreteDensity m0_second = initial_density(c, 1);
  const std::unique_ptr<CoefficientModel> model = build_model(c);
  SnapshotRecorder recorder(c.snapshots, scheme.h, scheme.steps);
  std::string status = "ok";

  try {
    if (!model->depends_on_future()) {
      ForwardOptions opts;
      opts.retention = Retention::latest;
      opts.observer = [&](std::size_t k, const DiscreteDensity& a, const DiscreteDensity& b) {
        out.audit.observe(a);
        out.audit.observe(b);
        recorder(k, a, b);
      };
      (void)solve_explicit(*model, scheme, m0_first, m0_second, opts);
    } else {
      try {
        ImplicitSolution sol = solve_implicit(*model, scheme, c.fixed_point, m0_first, m0_second);
        out.iterations = sol.report;
        out.audit.observe(sol.trajectories);
        recorder.record_from(sol.trajectories);
      } catch (const NonConvergenceError& e) {
        out.iterations = e.report();
        out.audit.observe(e.partial());
        recorder.record_from(e.partial());
        out.exit_code = 3;
        out.message = e.what();
        status = "not-converged";
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    out.exit_code = 4;
    out.message = e.what();
    status = "numeric-failure";
  }

  nlohmann::json report = describe(c, scheme);
  report["status"] = status;
  if (!out.message.empty()) report["message"] = out.message;
  report["max_mass_defect"] = out.audit.max_defect;
  report["min_mass"] = std::isfinite(out.audit.min_mass) ? out.audit.min_mass : 0.0;
  if (out.iterations) report["iteration_report"] = out.iterations->to_json();

  const bool have_snapshots = out.exit_code != 4;
  double max_density = 0.0;
  if (have_snapshots) {
    for (std::size_t s = 0; s < c.snapshots.size(); ++s) {
      out.snapshot_times.push_back(c.snapshots[s]);
      out.snapshots.push_back({recorder.at(s, 0), recorder.at(s, 1)});
      for (const auto& d : out.snapshots.back()) {
        for (std::size_t i = 0; i < d.size(); ++i) max_density = std::max(max_density, d.density(i));
      }
    }
  }

  nlohmann::json snaps = nlohmann::json::array();
  if (write) fs::create_directories(c.output_dir);
  for (std::size_t s = 0; s < out.snapshots.size(); ++s) {
    nlohmann::json entry = {{"index", s}, {"time", out.snapshot_times[s]}};
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t pop = 0; pop < 2; ++pop) {
      const std::string stem = "m" + std::to_string(pop + 1) + "_t" + std::to_string(s);
      if (c.formats.csv) {
        files.push_back(stem + ".csv");
        if (write) {
          std::ofstream f(fs::path(c.output_dir) / (stem + ".csv"));
          write_density_csv(f, out.snapshots[s][pop]);
        }
      }
      if (c.formats.pgm && c.dim == 2) {
        files.push_back(stem + ".pgm");
        if (write) {
          std::ofstream f(fs::path(c.output_dir) / (stem + ".pgm"), std::ios::binary);
          write_density_pgm(f, out.snapshots[s][pop], max_density);
        }
      }
    }
    entry["files"] = files;
    snaps.push_back(entry);
  }
  report["snapshots"] = snaps;
  report["pgm_max_density"] = max_density;
  report["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (write) {
    std::ofstream f(fs::path(c.output_dir) / "report.json");
    f << report.dump(2) << '\n';
  }
  out.report = std::move(report);
  return out;
}

}  // namespace fpk
