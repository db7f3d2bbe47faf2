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


#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fpk/config.hpp"
#include "fpk/experiment.hpp"

namespace fpk {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fpk_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

int run_cli(const std::string& args, const fs::path& stdout_file = {}) {
  std::string cmd = std::string("\"") + FPK_CLI_PATH + "\" " + args;
  cmd += stdout_file.empty() ? " > /dev/null" : " > \"" + stdout_file.string() + "\"";
  cmd += " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmallSpecies = R"(
[run]
model = species
[grid]
dim = 2
rho = 0.1
[time]
T = 0.1
h = 0.05
[initial]
kind = species-paper
[species]
delta = 0.1
[output]
snapshots = 0.1, 0
formats = csv, pgm
)";

const char* kSmallMfg = R"(
[run]
model = mfg
[grid]
lo = -0.5
hi = 0.5
rho = 0.05
[time]
T = 0.5
[initial]
kind = mfg-paper
[mfg]
delta = 0.05
epsilon = 0.05
[fixed_point]
max_iters = 1
tol = 1e-9
[output]
snapshots = 0, 0.5
)";

TEST(ConfigTest, PresetsValidate) {
  for (const std::string& name : preset_names()) {
    const RunConfig c = preset(name);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_EQ(c.preset, name);
  }
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(ConfigTest, PresetOverridesApply) {
  const RunConfig c = parse("[run]\npreset = mfg-paper-nu005\n[mfg]\nnu = 0.01\n");
  EXPECT_EQ(c.model, ModelKind::mfg);
  EXPECT_DOUBLE_EQ(c.mfg.nu, 0.01);
  EXPECT_DOUBLE_EQ(c.rho_first, 0.02);
  const SchemeConfig s = c.scheme();
  EXPECT_EQ(s.steps, static_cast<std::size_t>(std::ceil(4.0 / std::pow(0.02, 1.5))));
}

TEST(ConfigTest, ErrorsNameTheLocation) {
  EXPECT_NE(config_error("[grid]\nrho = abc\n").find("[grid] rho"), std::string::npos);
  EXPECT_NE(config_error("[grid]\ncolour = 3\n").find("unknown key"), std::string::npos);
  EXPECT_NE(config_error("[wibble]\nx = 1\n").find("unknown section"), std::string::npos);
  EXPECT_NE(config_error("[grid]\nrho = 0.1\nnot a line\n").find("test.ini:3"),
            std::string::npos);
  EXPECT_NE(config_error("[run]\nmodel = heat\n").find("unknown model"), std::string::npos);
  EXPECT_NE(config_error("[fixed_point]\nmax_iters = 2.5\n").find("whole number"),
            std::string::npos);
  EXPECT_NE(config_error("[output]\nformats = csv, tiff\n").find("tiff"), std::string::npos);
  EXPECT_FALSE(config_error("[time]\nT = 1\n[output]\nsnapshots = 2\n").empty());
  EXPECT_FALSE(config_error("[grid]\nrho = 0.3\n").empty());
  EXPECT_FALSE(config_error("[grid]\nrho = -1\n").empty());
  EXPECT_FALSE(config_error("[species]\nnormalization = sideways\n").empty());
  EXPECT_THROW(load_config("/nonexistent/fpk.ini"), ConfigError);
}

TEST(ExperimentTest, EmptySnapshotListWritesOnlyTheReport) {
  const fs::path dir = scratch_dir("empty");
  RunConfig c = parse("[run]\npreset = heat\n[output]\nsnapshots =\n");
  c.output_dir = dir.string();
  const RunOutcome out = run_experiment(c);
  EXPECT_EQ(out.exit_code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++files;
    EXPECT_EQ(e.path().filename(), "report.json");
  }
  EXPECT_EQ(files, 1u);
  fs::remove_all(dir);
}

TEST(ExperimentTest, WritesCsvPgmAndReport) {
  const fs::path dir = scratch_dir("species");
  RunConfig c = parse(kSmallSpecies);
  c.output_dir = dir.string();
  const RunOutcome out = run_experiment(c);
  ASSERT_EQ(out.exit_code, 0);
  ASSERT_EQ(out.snapshots.size(), 2u);
  EXPECT_DOUBLE_EQ(out.snapshot_times[0], 0.0);

  const GridSpec g = c.grid(0);
  std::istringstream csv(slurp(dir / "m1_t1.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "axis0,axis1,density");
  std::size_t rows = 0;
  double mass = 0.0;
  while (std::getline(csv, line)) {
    ++rows;
    mass += std::stod(line.substr(line.rfind(',') + 1)) * g.cell_volume();
  }
  EXPECT_EQ(rows, g.size());
  EXPECT_NEAR(mass, 1.0, 1e-9);

  const std::string pgm = slurp(dir / "m2_t0.pgm");
  std::istringstream hdr(pgm);
  std::string magic, comment;
  std::getline(hdr, magic);
  std::getline(hdr, comment);
  std::size_t w = 0, h = 0, maxval = 0;
  hdr >> w >> h >> maxval;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(comment.rfind("# density min=0 max=", 0), 0u);
  EXPECT_EQ(w, g.nodes(0));
  EXPECT_EQ(h, g.nodes(1));
  EXPECT_EQ(maxval, 255u);
  hdr.get();
  EXPECT_EQ(pgm.size() - static_cast<std::size_t>(hdr.tellg()), w * h);

  const nlohmann::json r = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(r["status"], "ok");
  EXPECT_EQ(r["model"], "species");
  EXPECT_LE(r["max_mass_defect"].get<double>(), 1e-12);
  EXPECT_GE(r["min_mass"].get<double>(), 0.0);
  EXPECT_EQ(r["snapshots"].size(), 2u);
  EXPECT_EQ(r["snapshots"][1]["files"].size(), 4u);
  EXPECT_GT(r["pgm_max_density"].get<double>(), 0.0);
  EXPECT_EQ(r["time"]["steps"], 2);
  fs::remove_all(dir);
}

TEST(ExperimentTest, PgmOrientation) {
  const GridSpec g = GridSpec::square(0.0, 1.0, 0.5);
  // Mass only at (x0 = 1, x1 = 1): top-right pixel.
  const DiscreteDensity d = DiscreteDensity::dirac(g, g.flat({2, 2}));
  std::ostringstream os;
  write_density_pgm(os, d, d.density(g.flat({2, 2})));
  const std::string s = os.str();
  const std::string pixels = s.substr(s.size() - 9);
  EXPECT_EQ(static_cast<unsigned char>(pixels[2]), 255);
  for (std::size_t i = 0; i < 9; ++i) {
    if (i != 2) EXPECT_EQ(pixels[i], 0);
  }
  EXPECT_THROW(write_density_pgm(os, DiscreteDensity::dirac(GridSpec::interval(0, 1, 0.5), 0), 1.0),
               UnsupportedOperationError);
}

TEST(ExperimentTest, NonConvergenceStillWritesTheReport) {
  const fs::path dir = scratch_dir("mfg");
  RunConfig c = parse(kSmallMfg);
  c.output_dir = dir.string();
  const RunOutcome out = run_experiment(c);
  EXPECT_EQ(out.exit_code, 3);
  const nlohmann::json r = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(r["status"], "not-converged");
  EXPECT_EQ(r["iteration_report"]["iterations"], 1);
  EXPECT_EQ(r["iteration_report"]["residuals"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "m1_t1.csv"));
  fs::remove_all(dir);
}

TEST(CliTest, ExitCodes) {
  const fs::path dir = scratch_dir("cli");
  {
    std::ofstream f(dir / "bad.ini");
    f << "[grid]\nrho = zero\n";
  }
  EXPECT_EQ(run_cli("run \"" + (dir / "bad.ini").string() + "\""), 2);
  EXPECT_EQ(run_cli("run --preset no-such-preset"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  {
    std::ofstream f(dir / "mfg.ini");
    f << kSmallMfg << "dir = " << (dir / "mfg").string() << "\n";
  }
  EXPECT_EQ(run_cli("run \"" + (dir / "mfg.ini").string() + "\""), 3);
  EXPECT_TRUE(fs::exists(dir / "mfg" / "report.json"));
  EXPECT_EQ(run_cli("run --preset heat --out \"" + (dir / "heat").string() + "\""), 0);
  EXPECT_TRUE(fs::exists(dir / "heat" / "m1_t2.csv"));
  fs::remove_all(dir);
}

TEST(CliTest, ValidateIsDeterministicAndDetectsFaults) {
  const fs::path dir = scratch_dir("validate");
  EXPECT_EQ(run_cli("validate", dir / "a.txt"), 0);
  EXPECT_EQ(run_cli("validate", dir / "b.txt"), 0);
  const std::string a = slurp(dir / "a.txt");
  EXPECT_EQ(a, slurp(dir / "b.txt"));
  EXPECT_NE(a.find("all checks passed"), std::string::npos);
  EXPECT_EQ(run_cli("validate --inject-fault drift-sign", dir / "c.txt"), 1);
  EXPECT_NE(slurp(dir / "c.txt").find("FAIL"), std::string::npos);
  fs::remove_all(dir);
}

TEST(CliTest, ConvergenceCommand) {
  const fs::path dir = scratch_dir("conv");
  EXPECT_EQ(run_cli("convergence frozen --levels 2", dir / "out.txt"), 0);
  EXPECT_FALSE(slurp(dir / "out.txt").empty());
  EXPECT_EQ(run_cli("convergence nothing"), 2);
  EXPECT_EQ(run_cli("convergence heat --levels 1"), 2);
  fs::remove_all(dir);
}

TEST(CliTest, ShippedConfigsParse) {
  const fs::path configs = fs::path(FPK_SOURCE_DIR) / "configs";
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(configs)) {
    if (e.path().extension() != ".ini") continue;
    ++n;
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
  }
  EXPECT_GE(n, preset_names().size());
}

}  // namespace
}  // namespace fpk
