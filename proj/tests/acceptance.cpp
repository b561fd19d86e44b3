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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/ann2snn.hpp"
#include "snnbot/arm.hpp"
#include "snnbot/cli.hpp"
#include "snnbot/error.hpp"
#include "snnbot/nef_build.hpp"
#include "snnbot/neurons.hpp"
#include "snnbot/rng.hpp"
#include "snnbot/rover.hpp"
#include "snnbot/simulator.hpp"

namespace snnbot {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [FAILED]");
  }
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_runtime(Outcome& o, Clock::time_point start, double limit) {
  const double s = seconds_since(start);
  o.check(s < limit, "runtime " + fmt("%.2f", s) + " s < " + fmt("%g", limit) + " s");
}

Ensemble lif(const Id& id, int n, int d, std::uint64_t seed) {
  Ensemble e;
  e.id = id;
  e.n_neurons = n;
  e.dimensions = d;
  e.seed = seed;
  return e;
}

// 1. Decoder accuracy and agreement with a dense least-squares oracle.
Outcome decoder_accuracy() {
  Outcome o;
  const auto start = Clock::now();
  ModelGraph g;
  Ensemble e = lif("e", 100, 1, 3);
  e.neuron_model = NeuronModel::RateLIF;
  e.n_eval_points = 500;
  g.add_ensemble(e);
  const CompiledEnsemble ens = compile(validate_graph(g).value(), Backend::Reference).ensembles.at(0);
  const Eigen::MatrixXd a = activity_matrix(ens, ens.eval_points);
  const Eigen::MatrixXd d = solve_decoders(a, ens.eval_points, 0.1);
  const double rmse = std::sqrt((a * d - ens.eval_points).squaredNorm() / static_cast<double>(a.rows()));
  const double elapsed = seconds_since(start);

  const double sigma = 0.1 * a.maxCoeff();
  const Eigen::Index n = a.cols();
  Eigen::MatrixXd aug(a.rows() + n, n);
  aug << a, Eigen::MatrixXd::Identity(n, n) * sigma * std::sqrt(static_cast<double>(a.rows()));
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(a.rows() + n, 1);
  rhs.topRows(a.rows()) = ens.eval_points;
  const Eigen::MatrixXd oracle = aug.colPivHouseholderQr().solve(rhs);
  const double rel = (d - oracle).norm() / oracle.norm();

  o.check(rmse < 0.05, "rmse " + fmt("%.4f", rmse) + " < 0.05");
  o.check(rel <= 1e-9, "oracle rel diff " + fmt("%.2e", rel) + " <= 1e-9");
  o.check(elapsed < 1.0, "runtime " + fmt("%.3f", elapsed) + " s < 1 s");
  return o;
}

// 2. Spiking ensemble holds a constant.
Outcome spiking_representation() {
  Outcome o;
  const auto start = Clock::now();
  ModelGraph g;
  g.add_ensemble(lif("e", 500, 1, 7));
  g.add_node({"in", 1, NodeKind::ExternalInput});
  g.connect({.id = "c_in", .source = "in", .target = "e"});
  g.add_probe({"p", "e", ProbeQuantity::DecodedOutput, 0.01, 0.001});
  Simulator sim(compile(validate_graph(g).value(), Backend::Reference));
  const Eigen::VectorXd value = Eigen::VectorXd::Constant(1, 0.5);
  const ProbeTable& table = sim.run(1.0, [&](double, StepInputs& in) { in["in"] = value; }).at("p");
  double worst = 0.0;
  for (std::size_t k = 0; k < table.times.size(); ++k) {
    if (table.times[k] >= 0.5) worst = std::max(worst, std::abs(table.samples[k][0] - 0.5));
  }
  o.check(worst <= 0.05, "max |decoded - 0.5| after 0.5 s " + fmt("%.4f", worst) + " <= 0.05");
  check_runtime(o, start, 5.0);
  return o;
}

// 3. PES drives a learned output to a fixed target.
Outcome pes_convergence() {
  Outcome o;
  const auto start = Clock::now();
  ModelGraph g;
  g.add_ensemble(lif("e", 200, 2, 21));
  g.add_node({"in", 2, NodeKind::ExternalInput})
      .add_node({"error", 2, NodeKind::ExternalInput})
      .add_node({"out", 2, NodeKind::ExternalOutput});
  g.connect({.id = "c_in", .source = "in", .target = "e"});
  g.connect({.id = "learn", .source = "e", .target = "out", .synapse = 0.01,
             .learning = PESConfig{1e-2, "error"}});
  Simulator sim(compile(validate_graph(g).value(), Backend::Reference));
  const Eigen::Vector2d x(0.3, -0.2);
  const Eigen::Vector2d target(0.8, -0.5);
  double late = 0.0;
  int late_count = 0;
  sim.run(10.0, [&](double t, StepInputs& in) {
    in["in"] = x;
    const Eigen::Vector2d err = sim.node_value("out") - target;
    in["error"] = err;
    if (t >= 9.0) {
      late += err.norm();
      ++late_count;
    }
  });
  const double reduction = 1.0 - late / late_count / target.norm();
  o.check(reduction >= 0.9, "error reduction " + fmt("%.1f", 100.0 * reduction) + "% >= 90%");

  Rng rng(4);
  bool descent = true;
  for (double bound_fraction : {0.1, 0.9, 1.5, 1.99}) {
    const int n = 50;
    Eigen::VectorXd a(n);
    for (auto& v : a) v = rng.uniform(0.0, 200.0);
    const Eigen::Vector3d y(0.4, -1.2, 2.0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, 3);
    const double dt = 0.001;
    const double kappa = bound_fraction * n / (dt * a.squaredNorm());
    double prev = (adapt_signal(a, d) - y).norm();
    for (int k = 0; k < 200; ++k) {
      pes_update(d, a, adapt_signal(a, d) - y, kappa, dt);
      const double err = (adapt_signal(a, d) - y).norm();
      descent = descent && err <= prev * (1.0 + 1e-12);
      prev = err;
    }
  }
  o.check(descent, "per-step descent for kappa dt |a|^2 / n in {0.1, 0.9, 1.5, 1.99}");
  check_runtime(o, start, 10.0);
  return o;
}

// 4. Open-loop decoded control laws.
Outcome rover_law_fidelity() {
  Outcome o;
  struct Preset {
    int n;
    double accel_limit;
    double steer_limit;
  };
  for (const Preset& p : {Preset{4096, 0.05, 0.08}, Preset{512, 0.10, 0.15}}) {
    RoverConfig c;
    c.net.n_neurons = p.n;
    const CompiledModel m = compile(validate_graph(build_rover_net(c, 1)).value(), Backend::Reference);
    const LawFidelity f = evaluate_law_fidelity(m, c);
    const double accel = f.accel_rmse / c.net.k_a;
    const double steer = f.steer_rmse / (c.net.k_p * M_PI);
    const std::string tag = std::to_string(p.n) + " neurons: ";
    o.check(accel < p.accel_limit,
            tag + "accel rmse " + fmt("%.2f", 100 * accel) + "% < " + fmt("%g", 100 * p.accel_limit) + "%");
    o.check(steer < p.steer_limit,
            tag + "steer rmse " + fmt("%.2f", 100 * steer) + "% < " + fmt("%g", 100 * p.steer_limit) + "%" +
                " (ahead only " + fmt("%.2f", 100 * f.steer_rmse_ahead / (c.net.k_p * M_PI)) + "%)");
  }
  return o;
}

// 5. Closed-loop target capture.
Outcome rover_closed_loop() {
  Outcome o;
  const auto start = Clock::now();
  RoverConfig c;
  c.net.n_neurons = 512;
  int runs = 0;
  int full = 0;
  double worst_t = 0.0;
  bool spawn_ok = true;
  for (Backend b : {Backend::Reference, Backend::FixedPoint}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const RoverRun r = run_rover_task(c, seed, b);
      ++runs;
      bool all = r.captures.size() == 6u;
      for (const RoverCapture& cap : r.captures) {
        all = all && cap.captured && cap.t_capture <= 30.0;
        if (cap.captured) worst_t = std::max(worst_t, cap.t_capture);
        spawn_ok = spawn_ok && cap.spawn.norm() <= c.task.spawn_radius;
      }
      full += all;
    }
  }
  o.check(full == runs, std::to_string(full) + "/" + std::to_string(runs) +
                            " runs captured 6/6 (2 backends x 3 seeds, 512 neurons)");
  o.check(spawn_ok, "spawns within 3 m");
  o.check(worst_t <= 30.0, "slowest capture " + fmt("%.2f", worst_t) + " s <= 30 s");
  check_runtime(o, start, 300.0);
  return o;
}

// 6. Adaptive arm control outperforms PID under payload.
Outcome arm_ordering() {
  Outcome o;
  const auto start = Clock::now();
  const ArmExperimentConfig c;
  const std::vector<ArmController> controllers{ArmController::PID, ArmController::AdaptiveReference,
                                               ArmController::AdaptiveFixedPoint};
  const ArmExperimentResult r = run_reach_experiment(c, controllers, 1);
  o.check(r.failures.empty(), std::to_string(r.failures.size()) + " failed sessions");

  std::map<ArmController, double> late_sum;
  std::map<ArmController, int> late_count;
  std::map<std::pair<ArmController, int>, std::vector<double>> raw;
  bool baselines = true;
  for (const TrialRecord& rec : r.records) {
    if (rec.controller == ArmController::PD) baselines = baselines && rec.error_pct == 100.0;
    if (rec.controller == ArmController::PDNoLoad) baselines = baselines && rec.error_pct == 0.0;
    raw[{rec.controller, rec.session}].push_back(rec.error_raw);
    if (rec.trial >= c.task.n_reaches - 10) {
      late_sum[rec.controller] += rec.error_pct;
      ++late_count[rec.controller];
    }
  }
  auto late = [&](ArmController k) { return late_sum[k] / std::max(1, late_count[k]); };
  o.check(baselines, "PD-load == 100 and PD-no-load == 0 on every reach");
  const double pid = late(ArmController::PID);
  o.check(pid < 100.0, "PID " + fmt("%.2f", pid) + "% < 100%");
  for (ArmController k : {ArmController::AdaptiveReference, ArmController::AdaptiveFixedPoint}) {
    o.check(late(k) < pid, std::string(to_string(k)) + " " + fmt("%.2f", late(k)) + "% < PID");
    bool negative = true;
    int sessions = 0;
    for (int s = 0; s < c.task.n_sessions; ++s) {
      const auto it = raw.find({k, s});
      if (it == raw.end()) {
        negative = false;
        continue;
      }
      ++sessions;
      negative = negative && error_trend_slope(it->second) < 0.0;
    }
    o.check(negative && sessions == c.task.n_sessions,
            std::string(to_string(k)) + " error slope negative in all " + std::to_string(c.task.n_sessions) +
                " sessions");
  }
  check_runtime(o, start, 600.0);
  return o;
}

// Filtered activity of a two-neuron ensemble with fixed tuning along the
// input ramp (0, -1) -> (0, 1), optionally lifted onto the 3-sphere.
std::vector<Eigen::VectorXd> ramp_traces(const Eigen::MatrixXd& encoders, bool lifted,
                                         std::vector<double>& ramp) {
  const double intercept = 0.8;
  const std::vector<double> max_rates{200.0, 200.0};
  const std::vector<double> intercepts{intercept, intercept};
  ModelGraph g;
  Ensemble e = lif("e", 2, static_cast<int>(encoders.cols()), 1);
  e.encoders = encoders;
  e.gain_bias = solve_gain_bias(max_rates, intercepts, {}, NeuronModel::LIF);
  e.n_eval_points = 1;
  g.add_ensemble(e);
  g.add_node({"in", static_cast<int>(encoders.cols()), NodeKind::ExternalInput});
  g.connect({.id = "c_in", .source = "in", .target = "e"});
  g.add_probe({"a", "e", ProbeQuantity::FilteredActivity, 0.02, 0.001});
  Simulator sim(compile(validate_graph(g).value(), Backend::Reference));
  const double duration = 4.0;
  ramp.clear();
  const ProbeTable& table = sim.run(duration, [&](double t, StepInputs& in) {
    const double y = std::clamp(-1.0 + 2.0 * t / duration, -1.0, 1.0);
    ramp.push_back(y);
    Eigen::VectorXd v(encoders.cols());
    if (lifted) {
      v << 0.0, y, std::sqrt(std::max(0.0, 1.0 - y * y));
    } else {
      v << 0.0, y;
    }
    in["in"] = v;
  }).at("a");
  return table.samples;
}

// 7. Hypersphere projection.
Outcome hypersphere() {
  Outcome o;
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 1000000; ++trial) {
    Eigen::VectorXd v(6);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    if (trial % 7 == 0) v[trial % 6] = trial % 2 ? 1.0 : -1.0;
    worst = std::max(worst, std::abs(project_hypersphere(v).norm() - 1.0));
  }
  o.check(worst <= 1e-9, "max |norm - 1| over 1e6 inputs " + fmt("%.1e", worst) + " <= 1e-9");

  const auto lift = [](double x, double y) { return Eigen::Vector3d(x, y, std::sqrt(1.0 - x * x - y * y)); };
  const Eigen::Vector3d ea = lift(0.0, 0.5);
  const Eigen::Vector3d eb = lift(0.0, 1.0);
  const double cosine = ea.dot(eb) / (ea.norm() * eb.norm());
  o.check(std::abs(cosine - 0.5) <= 1e-12, "lifted encoder cosine " + fmt("%.12f", cosine));

  std::vector<double> ramp;
  Eigen::MatrixXd flat(2, 2);
  flat << 0.0, 0.5, 0.0, 1.0;
  const auto traces2 = ramp_traces(flat, false, ramp);
  double diff2 = 0.0;
  double peak2 = 0.0;
  for (const auto& s : traces2) {
    diff2 = std::max(diff2, std::abs(s[0] - s[1]));
    peak2 = std::max(peak2, s[1]);
  }
  o.check(diff2 == 0.0 && peak2 > 0.0,
          "2D traces identical (max diff " + fmt("%g", diff2) + " Hz, peak " + fmt("%.0f", peak2) + " Hz)");

  Eigen::MatrixXd sphere(2, 3);
  sphere.row(0) = ea.transpose();
  sphere.row(1) = eb.transpose();
  const auto traces3 = ramp_traces(sphere, true, ramp);
  double diff3 = 0.0;
  double peak_a = 0.0;
  double peak_a_y = 0.0;
  double a_at_end = 0.0;
  double b_at_mid = 0.0;
  for (std::size_t k = 0; k < traces3.size(); ++k) {
    const auto& s = traces3[k];
    diff3 = std::max(diff3, std::abs(s[0] - s[1]));
    if (s[0] > peak_a) {
      peak_a = s[0];
      peak_a_y = ramp[k];
    }
    if (ramp[k] >= 0.99) a_at_end = std::max(a_at_end, s[0]);
    if (std::abs(ramp[k] - 0.5) < 0.01) b_at_mid = std::max(b_at_mid, s[1]);
  }
  o.check(diff3 > 0.5 * peak_a, "3D traces differ (max diff " + fmt("%.0f", diff3) + " Hz)");
  o.check(std::abs(peak_a_y - 0.5) < 0.15,
          "lifted (0, 0.5) neuron peaks at y = " + fmt("%.2f", peak_a_y));
  o.check(a_at_end < 0.05 * peak_a && b_at_mid < 0.05 * peak_a,
          "each lifted neuron silent at the other's preferred input");
  return o;
}

// 8. Fixed-point neuron and weight quantization.
Outcome quantized_backend() {
  Outcome o;
  const double dt = 0.001;
  const double seconds = 2.0;
  const auto steps = static_cast<int>(std::lround(seconds / dt));
  const QuantizationSpec q;
  const NeuronParams p;
  QuantizedNeuronKernel kernel(NeuronModel::LIF, p, dt, q);
  bool monotone = true;
  int plateaus = 0;
  double prev = -1.0;
  double worst = 0.0;
  double worst_j = 0.0;
  Eigen::VectorXd current(1);
  Eigen::VectorXd spikes;
  for (int i = 0; i <= 20000; ++i) {
    const double j = 0.9 + i * 0.001;
    const double float_rate = lif_rate(j, p);
    if (float_rate > 250.0) break;
    QuantizedNeuronState state(1);
    current[0] = j;
    int count = 0;
    for (int t = 0; t < steps; ++t) {
      kernel.step(state, current, spikes);
      count += spikes[0] > 0.0;
    }
    const double r = count / seconds;
    monotone = monotone && r >= prev;
    plateaus += r == prev;
    prev = r;
    if (std::abs(r - float_rate) > worst) {
      worst = std::abs(r - float_rate);
      worst_j = j;
    }
  }
  o.check(monotone && plateaus > 0, "rate staircase monotone with " + std::to_string(plateaus) + " plateaus");
  o.check(worst <= 10.0, "max |quantized - float| " + fmt("%.2f", worst) + " Hz (at J = " + fmt("%.2f", worst_j) +
                             ") <= 10 Hz for rates <= 250 Hz");

  std::mt19937_64 gen(3);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> bits(2, 16);
  std::uniform_real_distribution<double> log_scale(-8.0, 6.0);
  bool bounded = true;
  long long checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    QuantizationSpec qs;
    qs.weight_mantissa_bits = bits(gen);
    Eigen::MatrixXd w(1 + trial % 13, 1 + trial % 17);
    const double scale = std::pow(10.0, log_scale(gen));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(gen);
    const QuantizedMatrix qm = quantize_weights(w, qs);
    const double half_step = std::ldexp(1.0, qm.exponent - 1);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      bounded = bounded && std::abs(qm.values.data()[i] - w.data()[i]) <= half_step;
      ++checked;
    }
  }
  o.check(bounded, "weight error <= 2^(e-1) on all " + std::to_string(checked) + " sampled elements");
  return o;
}

// 9. ANN to SNN conversion fidelity.
Outcome ann_fidelity() {
  Outcome o;
  const DenseNetSpec net = random_dense_net({8, 16, 2}, 1.0, 0.1, 1);
  const Eigen::MatrixXd inputs = random_inputs(50, 8, 1);
  std::vector<double> errors;
  std::string listing;
  for (double s : {1.0, 10.0, 100.0, 400.0}) {
    ConversionConfig c;
    c.scale_firing_rates = s;
    c.output_synapse = 0.01;
    errors.push_back(fidelity_report(net, c, inputs).normalized_error());
    listing += (listing.empty() ? "" : ", ") + fmt("%g", s) + ": " + fmt("%.4f", errors.back());
  }
  o.check(errors.back() < 0.05, "error at s = 400 " + fmt("%.2f", 100 * errors.back()) + "% < 5%");
  bool non_increasing = true;
  for (std::size_t k = 1; k < errors.size(); ++k) non_increasing = non_increasing && errors[k] <= 1.1 * errors[k - 1];
  o.check(non_increasing, "non-increasing within 10% over s {" + listing + "}");
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Byte-identical CLI outputs. Simulation is single-threaded, so there
// is no internal parallelism to vary.
Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "snnbot_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "config.txt";
  std::ofstream(cfg) << "[arm]\nn_sessions = 1\nn_reaches = 3\nduration = 1.0\nn_neurons = 200\n"
                     << "[rover]\nn_neurons = 512\n";
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases{
      {"tune", {"tune.csv"}},
      {"solve", {"solve.csv"}},
      {"convert", {"fidelity.csv"}},
      {"arm", {"arm_trials.csv", "arm_traj.csv"}},
      {"rover", {"rover_traj.csv", "rover_captures.csv"}},
  };
  for (const auto& [cmd, files] : cases) {
    std::vector<std::string> outs;
    bool ran = true;
    for (const char* tag : {"a", "b"}) {
      std::ostringstream out;
      std::ostringstream err;
      const fs::path dir = root / (cmd + "_" + tag);
      ran = ran && run_cli({cmd, "--config", cfg.string(), "--seed", "5", "--out", dir.string()}, out, err) ==
                       kExitOk;
      std::string bytes;
      for (const std::string& f : files) bytes += slurp(dir / f);
      outs.push_back(bytes);
    }
    o.check(ran && !outs[0].empty() && outs[0] == outs[1],
            cmd + " " + std::to_string(outs[0].size()) + " bytes identical");
  }
  fs::remove_all(root);
  return o;
}

}  // namespace
}  // namespace snnbot

int main(int argc, char** argv) {
  using namespace snnbot;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"decoder accuracy", decoder_accuracy},
      {"spiking representation", spiking_representation},
      {"PES convergence", pes_convergence},
      {"rover law fidelity", rover_law_fidelity},
      {"rover closed loop", rover_closed_loop},
      {"adaptive arm ordering", arm_ordering},
      {"hypersphere projection", hypersphere},
      {"quantized backend", quantized_backend},
      {"ANN to SNN fidelity", ann_fidelity},
      {"determinism", determinism},
  };
  // Optional arguments select criteria by number; all run by default.
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int k = 1; k < argc; ++k) {
    const int n = std::atoi(argv[k]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[k]);
      return 64;
    }
    selected[n - 1] = true;
  }
  int failed = 0;
  int ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    Outcome o;
    const auto start = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %2zu %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                seconds_since(start), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
