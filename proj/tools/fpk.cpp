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


// fpk: command-line driver.
//   fpk run <config.ini> | fpk run --preset NAME [--out DIR]
//   fpk validate [--inject-fault drift-sign]
//   fpk convergence <heat|frozen|ou|species> --levels N

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fpk/config.hpp"
#include "fpk/convergence.hpp"
#include "fpk/experiment.hpp"
#include "fpk/validation.hpp"

namespace {

constexpr int kExitConfig = 2;

int run_command(const std::string& config_path, const std::string& preset_name,
                const std::string& out_dir) {
  fpk::RunConfig config;
  try {
    if (!config_path.empty() && !preset_name.empty()) {
      throw fpk::ConfigError("give either a config file or --preset, not both");
    }
    if (config_path.empty() && preset_name.empty()) {
      throw fpk::ConfigError("missing config file (or --preset NAME)");
    }
    config = preset_name.empty() ? fpk::load_config(config_path) : fpk::preset(preset_name);
    if (!out_dir.empty()) config.output_dir = out_dir;
    config.validate();
  } catch (const fpk::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const fpk::RunOutcome outcome = fpk::run_experiment(config, true, &std::cerr);
  std::cout << "status: " << outcome.report["status"].get<std::string>() << '\n'
            << "max mass defect: " << outcome.audit.max_defect << '\n';
  if (outcome.iterations) {
    std::cout << "fixed-point iterations: " << outcome.iterations->iterations << '\n';
  }
  std::cout << "snapshots: " << outcome.snapshots.size() << ", output: " << config.output_dir
            << '\n';
  if (!outcome.message.empty()) std::cerr << "error: " << outcome.message << '\n';
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-Lagrangian solver for coupled two-population Fokker-Planck systems"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir;
  CLI::App* run = app.add_subcommand("run", "Run an experiment from a config file or preset");
  run->add_option("config", config_path, "Config file (INI)");
  run->add_option("--preset", preset_name, "Built-in preset")
      ->check(CLI::IsMember(fpk::preset_names()));
  run->add_option("--out", out_dir, "Output directory (overrides [output] dir)");

  std::string fault;
  CLI::App* validate = app.add_subcommand("validate", "Run the built-in analytic checks");
  validate->add_option("--inject-fault", fault, "Deliberately break the solver")
      ->check(CLI::IsMember({"drift-sign"}));

  std::string study;
  std::size_t levels = 3;
  CLI::App* conv = app.add_subcommand("convergence", "Grid refinement study");
  conv->add_option("preset", study, "heat, frozen, ou or species")->required();
  conv->add_option("--levels", levels, "Number of refinement levels (>= 2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return run_command(config_path, preset_name, out_dir);
    if (*validate) {
      fpk::ValidationOptions opt;
      opt.inject_drift_sign_fault = fault == "drift-sign";
      return fpk::print_validation(std::cout, fpk::run_validation(opt)) ? 0 : 1;
    }
    if (*conv) {
      fpk::ConvergenceCase cc;
      try {
        cc = fpk::convergence_case(study);
        if (levels < 2) throw fpk::ConfigError("--levels must be at least 2");
      } catch (const fpk::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
      }
      fpk::print_convergence(std::cout, study, fpk::convergence_study(cc, levels));
      return 0;
    }
  } catch (const fpk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
