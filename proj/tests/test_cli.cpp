/*
 * Copyright 2026 The snnbot Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "snnbot/cli.hpp"

namespace snnbot {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("snnbot_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const std::string& text) {
    const fs::path p = root_ / "config.txt";
    std::ofstream(p) << text;
    return p;
  }

  fs::path root_;
};

constexpr const char* kSmallArm =
    "[arm]\nn_sessions = 1\nn_reaches = 2\nduration = 0.3\nn_neurons = 50\n";

TEST_F(Cli, UnknownSubcommandIsUsageError) {
  const Result r = run({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"tune", "--sed", "3"}).code, kExitUsage);
  EXPECT_EQ(run({"tune", "--seed", "abc"}).code, kExitUsage);
}

TEST_F(Cli, HelpListsConfigKeys) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* text : {"tune", "solve", "convert", "arm", "rover", "bench", "payload_mass = 1  (real, kg)",
                           "[convert]", "capture_radius = 0.5  (real, m)"}) {
    EXPECT_NE(r.out.find(text), std::string::npos) << text;
  }
}

TEST_F(Cli, ValidationErrorsExitOne) {
  const Result typo = run({"arm", "--config", write_config("[arm]\npayload_mas = 1.5\n").string(), "--out",
                           (root_ / "o").string()});
  EXPECT_EQ(typo.code, kExitValidation);
  EXPECT_NE(typo.err.find("UnknownKey"), std::string::npos);
  EXPECT_NE(typo.err.find("line 2"), std::string::npos);

  EXPECT_EQ(run({"arm", "--config", write_config("[arm]\nn_reaches = 0\n").string()}).code, kExitValidation);
  EXPECT_EQ(run({"rover", "--config", (root_ / "missing.txt").string()}).code, kExitValidation);
  EXPECT_EQ(run({"convert", "--config", write_config("[convert]\nscale_firing_rates = -1\n").string()}).code,
            kExitValidation);
  EXPECT_EQ(run({"solve", "--config", write_config("[neurons]\nmax_rate_max = 900\n").string()}).code,
            kExitValidation);
  EXPECT_FALSE(fs::exists(root_ / "o"));
  EXPECT_FALSE(fs::exists("results"));
}

TEST_F(Cli, DivergenceExitsTwo) {
  const fs::path out = root_ / "o";
  const Result r = run({"arm", "--config", write_config(std::string(kSmallArm) + "learning_rate = 1e9\n").string(),
                        "--out", out.string()});
  EXPECT_EQ(r.code, kExitDivergence) << r.err;
  EXPECT_NE(r.err.find("diverge"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(out / "arm_trials.csv"));
}

TEST_F(Cli, ArmWritesTrialRowsPerController) {
  const fs::path out = root_ / "o";
  const Result r = run({"arm", "--config", write_config(kSmallArm).string(), "--seed", "7", "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(listing(out), (std::set<std::string>{"arm_trials.csv", "arm_traj.csv", "effective_config.txt"}));
  const std::string trials = slurp(out / "arm_trials.csv");
  EXPECT_EQ(trials.substr(0, trials.find('\n')), "session,trial,controller,error_raw,error_pct");
  // 1 session x 2 reaches x (4 controllers + the PD_noload baseline).
  EXPECT_EQ(count_lines(trials), 1u + 1 * 2 * (4 + 1));
  for (const char* label : {"PD_noload", "PD_load", "PID", "adaptive_reference", "adaptive_fixed"}) {
    EXPECT_NE(trials.find(std::string(",") + label + ","), std::string::npos) << label;
  }
  EXPECT_EQ(count_lines(slurp(out / "arm_traj.csv")), 1u + 300);
  const std::string effective = slurp(out / "effective_config.txt");
  EXPECT_NE(effective.find("seed = 7\n"), std::string::npos);
  EXPECT_NE(effective.find("n_reaches = 2\n"), std::string::npos);
}

TEST_F(Cli, EverySubcommandIsByteDeterministic) {
  const fs::path cfg = write_config(std::string(kSmallArm) + "[rover]\nn_neurons = 512\n[neurons]\nsweep_step = 0.05\n");
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"tune", {"tune.csv"}},
      {"solve", {"solve.csv"}},
      {"convert", {"fidelity.csv"}},
      {"arm", {"arm_trials.csv", "arm_traj.csv"}},
      {"rover", {"rover_traj.csv", "rover_captures.csv"}},
  };
  for (const auto& [cmd, files] : cases) {
    const fs::path a = root_ / (cmd + "_a");
    const fs::path b = root_ / (cmd + "_b");
    ASSERT_EQ(run({cmd, "--config", cfg.string(), "--seed", "3", "--out", a.string()}).code, kExitOk) << cmd;
    ASSERT_EQ(run({cmd, "--config", cfg.string(), "--seed", "3", "--out", b.string()}).code, kExitOk) << cmd;
    for (const std::string& f : files) {
      const std::string bytes = slurp(a / f);
      EXPECT_GT(bytes.size(), 20u) << cmd << '/' << f;
      EXPECT_EQ(bytes, slurp(b / f)) << cmd << '/' << f;
    }
    EXPECT_TRUE(fs::exists(a / "effective_config.txt"));
  }
}

TEST_F(Cli, SeedChangesStochasticOutputs) {
  const fs::path cfg = write_config("[rover]\nn_neurons = 512\n");
  ASSERT_EQ(run({"rover", "--config", cfg.string(), "--seed", "1", "--out", (root_ / "a").string()}).code, 0);
  ASSERT_EQ(run({"rover", "--config", cfg.string(), "--seed", "2", "--out", (root_ / "b").string()}).code, 0);
  EXPECT_NE(slurp(root_ / "a" / "rover_captures.csv"), slurp(root_ / "b" / "rover_captures.csv"));
}

TEST_F(Cli, RoverOutputsSchemas) {
  const fs::path out = root_ / "o";
  const fs::path cfg = write_config("backend = fixed\n[rover]\nn_neurons = 512\n");
  const Result r = run({"rover", "--config", cfg.string(), "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("captured 6 of 6"), std::string::npos) << r.out;
  const std::string traj = slurp(out / "rover_traj.csv");
  EXPECT_EQ(traj.substr(0, traj.find('\n')), "t,x,y,theta,q,v,target_x,target_y,u_steer,u_accel");
  const std::string caps = slurp(out / "rover_captures.csv");
  EXPECT_EQ(caps.substr(0, caps.find('\n')), "target_idx,spawn_x,spawn_y,t_capture");
  EXPECT_EQ(count_lines(caps), 7u);
}

TEST_F(Cli, TuneSolveConvertSchemas) {
  const fs::path out = root_ / "o";
  ASSERT_EQ(run({"tune", "--out", out.string()}).code, kExitOk);
  ASSERT_EQ(run({"solve", "--out", out.string()}).code, kExitOk);
  ASSERT_EQ(run({"convert", "--out", out.string()}).code, kExitOk);
  const std::string tune = slurp(out / "tune.csv");
  EXPECT_EQ(tune.substr(0, tune.find('\n')), "J,rate_float,rate_quantized");
  EXPECT_EQ(count_lines(tune), 1u + 1001);
  const std::string solve = slurp(out / "solve.csv");
  EXPECT_EQ(solve.substr(0, solve.find('\n')), "x,target,decoded");
  EXPECT_EQ(count_lines(solve), 1u + 201);
  const std::string fid = slurp(out / "fidelity.csv");
  EXPECT_EQ(fid.substr(0, fid.find('\n')), "input_idx,dim,rate_out,spike_out,abs_err");
  EXPECT_EQ(count_lines(fid), 1u + 50 * 2);
}

TEST_F(Cli, ConvertReadsNetFile) {
  const fs::path net = root_ / "net.txt";
  std::ofstream(net) << "layers: 2 2 1\nlayer 0\nW 0 0 1\nW 1 1 1\nlayer 1\nW 0 0 1\nW 0 1 -1\nb 0 0.5\n";
  const fs::path cfg = write_config("[convert]\nnet_file = " + net.string() + "\nn_inputs = 4\n");
  const Result r = run({"convert", "--config", cfg.string(), "--out", (root_ / "o").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(count_lines(slurp(root_ / "o" / "fidelity.csv")), 1u + 4);
  std::ofstream(net) << "layers: 2 2 1\nlayer 0\nW 5 0 1\n";
  EXPECT_EQ(run({"convert", "--config", cfg.string(), "--out", (root_ / "p").string()}).code, kExitValidation);
}

TEST_F(Cli, BenchPrintsOnlyToStdout) {
  const fs::path cfg = write_config("out = " + (root_ / "never").string() + "\n[rover]\nbench_duration = 0.01\n");
  const Result r = run({"bench", "--config", cfg.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(count_lines(r.out), 5u);
  for (const char* row : {"reference,512,", "reference,4096,", "fixed,512,", "fixed,4096,"}) {
    EXPECT_NE(r.out.find(row), std::string::npos) << row;
  }
  EXPECT_FALSE(fs::exists(root_ / "never"));
}

}  // namespace
}  // namespace snnbot
