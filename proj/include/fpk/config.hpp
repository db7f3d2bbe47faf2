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

// Run configuration: a flat, sectioned key = value text file (INI style).
// A `preset` key in [run] loads a built-in experiment first; every other key
// overrides it. See configs/README.md for the full key list.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fpk/common.hpp"
#include "fpk/coupling.hpp"
#include "fpk/measure.hpp"
#include "fpk/models.hpp"

namespace fpk {

enum class ModelKind { linear, ou, species, mfg };
enum class InitialKind { gaussian, species_paper, mfg_paper, uniform };

struct OutputFormats {
  bool csv = true;
  bool pgm = false;
};

struct RunConfig {
  std::string preset;
  ModelKind model = ModelKind::linear;

  // Grid: the box [lo, hi]^dim, one spacing per population.
  std::size_t dim = 1;
  double lo = -1.0;
  double hi = 1.0;
  double rho_first = 0.02;
  double rho_second = 0.02;

  // Time: explicit h, or h = step_factor * rho^{3/2} (rho of population 1).
  double final_time = 1.0;
  std::optional<double> h;
  double step_factor = 1.0;

  InitialKind initial = InitialKind::gaussian;
  Point centre_first{};
  Point centre_second{};
  double initial_std = 0.1;

  // linear: drift b and isotropic noise sqrt(2 nu) I; ou: b = -theta x.
  Point drift{};
  double nu = 0.0;
  double theta = 1.0;

  SpeciesParams species;
  MFGParams mfg;
  FixedPointConfig fixed_point;
  BoundaryMode boundary = BoundaryMode::project;

  std::string output_dir = "out";
  std::vector<double> snapshots;
  OutputFormats formats;

  SchemeConfig scheme() const {
    if (h) return SchemeConfig::from_step(final_time, *h);
    return SchemeConfig::from_step_rule(final_time, rho_first, step_factor);
  }

  GridSpec grid(std::size_t pop) const {
    const double rho = pop == 0 ? rho_first : rho_second;
    return GridSpec::box(dim, {lo, dim > 1 ? lo : 0.0}, {hi, dim > 1 ? hi : 0.0}, rho);
  }

  void validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("[grid] dim must be 1 or 2");
    if (!(hi > lo)) throw ConfigError("[grid] hi must exceed lo");
    (void)grid(0);
    (void)grid(1);
    if (!(final_time > 0.0)) throw ConfigError("[time] T must be positive");
    scheme().validate();
    for (double t : snapshots) {
      if (!(t >= 0.0) || t > final_time * (1.0 + 1e-12)) {
        throw ConfigError("[output] snapshot time " + format_double(t) + " outside [0, T]");
      }
    }
    if (model == ModelKind::species) species.validate();
    if (model == ModelKind::mfg) {
      mfg.validate();
      if (!(rho_first == rho_second)) {
        throw ConfigError("[grid] the mfg model needs both populations on one grid");
      }
    }
    fixed_point.validate();
    if (initial == InitialKind::species_paper && dim != 2) {
      throw ConfigError("[initial] species-paper data is two-dimensional");
    }
    if (initial == InitialKind::gaussian && !(initial_std > 0.0)) {
      throw ConfigError("[initial] std must be positive");
    }
  }
};

namespace detail {

inline std::vector<double> parse_list(const std::string& text, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    const std::string tok = item.substr(b, e - b + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(v)) {
      throw ConfigError(where + ": '" + tok + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

inline double parse_number(const std::string& text, const std::string& where) {
  const auto v = parse_list(text, where);
  if (v.size() != 1) throw ConfigError(where + ": expected one number");
  return v[0];
}

inline Point parse_point(const std::string& text, const std::string& where) {
  const auto v = parse_list(text, where);
  if (v.empty() || v.size() > kMaxDim) throw ConfigError(where + ": expected 1 or 2 numbers");
  Point p{};
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i];
  return p;
}

inline KernelNormalization parse_normalization(const std::string& s, const std::string& where) {
  if (s == "unit-mass") return KernelNormalization::unit_mass;
  if (s == "paper-literal") return KernelNormalization::paper_literal;
  throw ConfigError(where + ": expected unit-mass or paper-literal, got '" + s + "'");
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"species-paper", "mfg-paper-nu005", "mfg-paper-nu0001", "mfg-paper-nu0", "heat", "ou"};
}

/// Built-in experiments.
inline RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "species-paper") {
    c.model = ModelKind::species;
    c.dim = 2;
    c.lo = -1.0;
    c.hi = 1.0;
    c.rho_first = c.rho_second = 0.02;
    c.final_time = 5.0;
    c.step_factor = 1.0 / 3.0;
    c.initial = InitialKind::species_paper;
    c.species.kernel = {0.02, 4.0, KernelNormalization::unit_mass};
    c.snapshots = {0, 1, 2, 3, 4, 5};
    c.formats = {true, true};
    c.output_dir = "out/species-paper";
    return c;
  }
  if (name.rfind("mfg-paper-", 0) == 0) {
    c.model = ModelKind::mfg;
    c.dim = 1;
    c.lo = -0.5;
    c.hi = 0.5;
    c.rho_first = c.rho_second = 0.02;
    c.final_time = 4.0;
    c.step_factor = 1.0;
    c.initial = InitialKind::mfg_paper;
    c.mfg.eta = 1e-5;
    c.mfg.density_kernel = {0.025, 4.0, KernelNormalization::unit_mass};
    c.mfg.epsilon = 0.025;
    c.output_dir = "out/" + name;
    if (name == "mfg-paper-nu005") {
      c.mfg.nu = 0.05;
      c.snapshots = {0, 0.1, 0.5, 2, 3, 4};
      return c;
    }
    if (name == "mfg-paper-nu0001") {
      c.mfg.nu = 0.001;
      c.snapshots = {0, 0.1, 0.2, 1, 2, 4};
      return c;
    }
    if (name == "mfg-paper-nu0") {
      c.mfg.nu = 0.0;
      // Finite-difference drift: the mollified drift does not settle the
      // learning iteration at nu = 0.
      c.mfg.epsilon = 0.0;
      c.snapshots = {0, 0.1, 0.5, 1, 2, 4};
      return c;
    }
  }
  if (name == "heat") {
    c.model = ModelKind::linear;
    c.dim = 1;
    c.lo = -1.0;
    c.hi = 1.0;
    c.rho_first = c.rho_second = 1.0 / 80.0;
    c.final_time = 0.25;
    c.h = 1.0 / 80.0;
    c.nu = 0.05;
    c.initial = InitialKind::gaussian;
    c.initial_std = 0.1;
    c.snapshots = {0, 0.125, 0.25};
    c.output_dir = "out/heat";
    return c;
  }
  if (name == "ou") {
    c.model = ModelKind::ou;
    c.dim = 1;
    c.lo = -1.0;
    c.hi = 1.0;
    c.rho_first = c.rho_second = 0.0025;
    c.final_time = 1.0;
    c.h = 0.005;
    c.theta = 1.0;
    c.nu = 0.02;
    c.initial = InitialKind::gaussian;
    c.initial_std = 0.05;
    c.centre_first = {0.3, 0.0};
    c.centre_second = {-0.3, 0.0};
    c.snapshots = {0, 0.5, 1};
    c.output_dir = "out/ou";
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

/// Parses configuration text. Syntax errors carry the line number, value
/// errors the [section] key.
inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.line() << ": " << e.message();
    throw ConfigError(msg.str());
  }

  RunConfig c;
  if (auto run = tree.get_child_optional("run")) {
    if (auto p = run->get_optional<std::string>("preset")) c = preset(*p);
  }

  static const std::map<std::string, std::set<std::string>> known = {
      {"run", {"preset", "model"}},
      {"grid", {"dim", "lo", "hi", "rho", "rho1", "rho2"}},
      {"time", {"T", "h", "step_factor"}},
      {"initial", {"kind", "centre1", "centre2", "std"}},
      {"linear", {"drift", "nu"}},
      {"ou", {"theta", "nu"}},
      {"species", {"delta", "truncation", "normalization"}},
      {"mfg",
       {"nu", "eta", "delta", "epsilon", "ratio", "crowd", "control_cap", "control_spacing",
        "truncation", "normalization"}},
      {"fixed_point", {"method", "damping", "tol", "max_iters"}},
      {"boundary", {"mode"}},
      {"output", {"dir", "snapshots", "formats"}},
  };

  for (const auto& [section, body] : tree) {
    const auto sec = known.find(section);
    if (sec == known.end() || body.empty()) {
      throw ConfigError(source + ": unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const std::string where = source + ": [" + section + "] " + key;
      if (!sec->second.count(key)) throw ConfigError(where + ": unknown key");
      const std::string v = node.get_value<std::string>();
      auto num = [&] { return detail::parse_number(v, where); };
      auto count = [&] {
        const double x = num();
        if (x < 0 || x != std::floor(x)) throw ConfigError(where + ": expected a whole number");
        return static_cast<std::size_t>(x);
      };

      if (section == "run") {
        if (key == "model") {
          if (v == "linear") c.model = ModelKind::linear;
          else if (v == "ou") c.model = ModelKind::ou;
          else if (v == "species") c.model = ModelKind::species;
          else if (v == "mfg") c.model = ModelKind::mfg;
          else throw ConfigError(where + ": unknown model '" + v + "'");
        }
      } else if (section == "grid") {
        if (key == "dim") c.dim = count();
        else if (key == "lo") c.lo = num();
        else if (key == "hi") c.hi = num();
        else if (key == "rho") c.rho_first = c.rho_second = num();
        else if (key == "rho1") c.rho_first = num();
        else if (key == "rho2") c.rho_second = num();
      } else if (section == "time") {
        if (key == "T") c.final_time = num();
        else if (key == "h") c.h = num();
        else if (key == "step_factor") {
          c.step_factor = num();
          c.h.reset();
        }
      } else if (section == "initial") {
        if (key == "kind") {
          if (v == "gaussian") c.initial = InitialKind::gaussian;
          else if (v == "species-paper") c.initial = InitialKind::species_paper;
          else if (v == "mfg-paper") c.initial = InitialKind::mfg_paper;
          else if (v == "uniform") c.initial = InitialKind::uniform;
          else throw ConfigError(where + ": unknown initial kind '" + v + "'");
        } else if (key == "centre1") c.centre_first = detail::parse_point(v, where);
        else if (key == "centre2") c.centre_second = detail::parse_point(v, where);
        else if (key == "std") c.initial_std = num();
      } else if (section == "linear") {
        if (key == "drift") c.drift = detail::parse_point(v, where);
        else if (key == "nu") c.nu = num();
      } else if (section == "ou") {
        if (key == "theta") c.theta = num();
        else if (key == "nu") c.nu = num();
      } else if (section == "species") {
        if (key == "delta") c.species.kernel.bandwidth = num();
        else if (key == "truncation") c.species.kernel.truncation = num();
        else if (key == "normalization") {
          c.species.kernel.normalization = detail::parse_normalization(v, where);
        }
      } else if (section == "mfg") {
        if (key == "nu") c.mfg.nu = num();
        else if (key == "eta") c.mfg.eta = num();
        else if (key == "delta") c.mfg.density_kernel.bandwidth = num();
        else if (key == "epsilon") c.mfg.epsilon = num();
        else if (key == "ratio") c.mfg.ratio_threshold = num();
        else if (key == "crowd") c.mfg.crowd_cap = num();
        else if (key == "control_cap") c.mfg.control_cap = num();
        else if (key == "control_spacing") c.mfg.control_spacing = num();
        else if (key == "truncation") c.mfg.density_kernel.truncation = num();
        else if (key == "normalization") {
          c.mfg.density_kernel.normalization = detail::parse_normalization(v, where);
        }
      } else if (section == "fixed_point") {
        if (key == "method") {
          if (v == "fictitious-play") c.fixed_point.method = FixedPointMethod::fictitious_play;
          else if (v == "picard") c.fixed_point.method = FixedPointMethod::picard;
          else throw ConfigError(where + ": expected fictitious-play or picard");
        } else if (key == "damping") c.fixed_point.damping = num();
        else if (key == "tol") c.fixed_point.tol = num();
        else if (key == "max_iters") c.fixed_point.max_iters = count();
      } else if (section == "boundary") {
        if (v == "project") c.boundary = BoundaryMode::project;
        else if (v == "error-on-exit") c.boundary = BoundaryMode::error_on_exit;
        else throw ConfigError(where + ": expected project or error-on-exit");
      } else if (section == "output") {
        if (key == "dir") c.output_dir = v;
        else if (key == "snapshots") {
          c.snapshots = detail::parse_list(v, where);
          std::sort(c.snapshots.begin(), c.snapshots.end());
        } else if (key == "formats") {
          c.formats = {false, false};
          std::stringstream ss(v);
          std::string f;
          while (std::getline(ss, f, ',')) {
            f.erase(0, f.find_first_not_of(" \t"));
            f.erase(f.find_last_not_of(" \t") + 1);
            if (f == "csv") c.formats.csv = true;
            else if (f == "pgm") c.formats.pgm = true;
            else if (!f.empty()) throw ConfigError(where + ": unknown format '" + f + "'");
          }
        }
      }
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

}  // namespace fpk
