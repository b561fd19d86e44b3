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

#include "snnbot/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>

#include "snnbot/ann2snn.hpp"
#include "snnbot/arm.hpp"
#include "snnbot/config.hpp"
#include "snnbot/csv.hpp"
#include "snnbot/error.hpp"
#include "snnbot/graph.hpp"
#include "snnbot/nef_build.hpp"
#include "snnbot/rng.hpp"
#include "snnbot/rover.hpp"
#include "snnbot/simulator.hpp"

namespace snnbot {
namespace {

namespace fs = std::filesystem;

struct Divergence {
  std::string what;
};

void write_effective_config(const RunConfig& config) {
  const fs::path path = fs::path(config.out) / "effective_config.txt";
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << format_config(config);
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.out, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + config.out + ": " + ec.message());
  write_effective_config(config);
}

NeuronModel spiking_counterpart(NeuronModel m) {
  if (m == NeuronModel::RateLIF) return NeuronModel::LIF;
  if (m == NeuronModel::RateRectifiedLinear) return NeuronModel::SpikingRectifiedLinear;
  return m;
}

void run_tune(const RunConfig& config, std::ostream& out) {
  const NeuronsSection& n = config.neurons;
  n.params.validate();
  const QuantizationSpec qspec = quantization_spec(config);
  qspec.validate();
  if (!(n.sweep_step > 0.0) || !(n.sweep_max >= n.sweep_min)) {
    throw Error(ErrorKind::InvalidParam, "sweep needs sweep_step > 0 and sweep_max >= sweep_min");
  }
  if (!(n.sweep_duration > 0.0)) throw Error(ErrorKind::InvalidParam, "sweep_duration must be > 0");
  const auto count = static_cast<Eigen::Index>(std::floor((n.sweep_max - n.sweep_min) / n.sweep_step + 1e-9)) + 1;
  Eigen::VectorXd currents(count);
  for (Eigen::Index k = 0; k < count; ++k) currents[k] = n.sweep_min + static_cast<double>(k) * n.sweep_step;

  const QuantizedNeuronKernel kernel(spiking_counterpart(n.model), n.params, config.dt, qspec);
  QuantizedNeuronState state(static_cast<std::size_t>(count));
  Eigen::VectorXd spikes;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(count);
  const long long steps = std::llround(n.sweep_duration / config.dt);
  for (long long s = 0; s < steps; ++s) {
    kernel.step(state, currents, spikes);
    counts += spikes;
  }
  const double seconds = static_cast<double>(steps) * config.dt;

  prepare_output(config);
  CsvWriter csv(fs::path(config.out) / "tune.csv", {"J", "rate_float", "rate_quantized"});
  double worst = 0.0;
  for (Eigen::Index k = 0; k < count; ++k) {
    const double f = rate(n.model, currents[k], n.params);
    const double q = counts[k] / seconds;
    worst = std::max(worst, std::abs(f - q));
    csv.row({currents[k], f, q});
  }
  out << "tune: " << count << " currents, model " << to_string(n.model)
      << ", max |float - quantized| = " << format_double(worst) << " Hz\n";
}

VectorFunction named_function(const std::string& name) {
  if (name == "square") return [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array().square()); };
  if (name == "cube") return [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array().cube()); };
  if (name == "abs") return [](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.array().abs()); };
  if (name == "sine") {
    return [](const Eigen::VectorXd& x) { return Eigen::VectorXd((x.array() * std::numbers::pi).sin()); };
  }
  return [](const Eigen::VectorXd& x) { return x; };
}

void run_solve(const RunConfig& config, std::ostream& out) {
  const NeuronsSection& n = config.neurons;
  if (n.solve_points < 2) throw Error(ErrorKind::InvalidParam, "solve_points must be >= 2");
  ModelGraph g(config.dt);
  Ensemble ens;
  ens.id = "ensemble";
  ens.n_neurons = n.n_neurons;
  ens.dimensions = 1;
  ens.neuron_model = n.model;
  ens.params = n.params;
  ens.max_rate_range = n.max_rates;
  ens.intercept_range = n.intercepts;
  ens.seed = derive_seed(config.seed, "solve/ensemble");
  ens.n_eval_points = n.n_eval_points;
  g.add_ensemble(ens);
  g.add_node({"decoded", 1, NodeKind::ExternalOutput});
  const VectorFunction fn = named_function(n.function);
  if (n.function != "identity") g.register_function(n.function, {fn, 1, 1});
  g.connect({.id = "decode", .source = "ensemble", .target = "decoded", .function = n.function});

  BuildConfig build;
  build.reg = n.reg;
  build.qspec = quantization_spec(config);
  const CompiledModel model = compile(validate_graph(g).value(), Backend::Reference, build);

  Eigen::MatrixXd x(n.solve_points, 1);
  for (int i = 0; i < n.solve_points; ++i) x(i, 0) = -1.0 + 2.0 * i / (n.solve_points - 1);
  const Eigen::VectorXd decoded = activity_matrix(model.ensembles[0], x) * model.connection("decode").decoders;

  prepare_output(config);
  CsvWriter csv(fs::path(config.out) / "solve.csv", {"x", "target", "decoded"});
  double sq = 0.0;
  for (int i = 0; i < n.solve_points; ++i) {
    const double target = fn(x.row(i).transpose())[0];
    sq += (decoded[i] - target) * (decoded[i] - target);
    csv.row({x(i, 0), target, decoded[i]});
  }
  out << "solve: " << n.function << " with " << n.n_neurons << " " << to_string(n.model)
      << " neurons, RMSE = " << format_double(std::sqrt(sq / n.solve_points)) << '\n';
}

void run_convert(const RunConfig& config, std::ostream& out) {
  const ConvertSection& c = config.convert;
  const ConversionConfig conv = conversion_config(config);
  conv.validate();
  if (c.n_inputs < 1) throw Error(ErrorKind::InvalidParam, "n_inputs must be >= 1");
  const DenseNetSpec net = c.net_file.empty()
                               ? random_dense_net(c.layer_sizes, c.weight_scale, c.bias_scale, config.seed)
                               : load_dense_net(c.net_file);
  const Eigen::MatrixXd inputs = random_inputs(c.n_inputs, net.sizes.front(), config.seed);
  const FidelityReport report = fidelity_report(net, conv, inputs);

  prepare_output(config);
  write_fidelity_csv(fs::path(config.out) / "fidelity.csv", report);
  out << "convert: " << c.n_inputs << " inputs, mean |spiking - rate| = " << format_double(report.mean_abs_err)
      << " (" << format_double(100.0 * report.normalized_error()) << "% of output range)\n";
  for (std::size_t l = 0; l < report.layer_mean_rates.size(); ++l) {
    out << "  layer " << l << " mean rate " << format_double(report.layer_mean_rates[l]) << " Hz\n";
  }
}

void run_arm(const RunConfig& config, std::ostream& out) {
  const ArmExperimentConfig exp = arm_config(config);
  exp.plant.validate();
  exp.task.validate(exp.plant);
  exp.qspec.validate();
  const ArmExperimentResult result = run_reach_experiment(exp, config.arm.controllers, config.seed);

  prepare_output(config);
  write_arm_trials_csv(fs::path(config.out) / "arm_trials.csv", result.records);
  if (config.arm.write_trajectory && !result.trajectory.empty()) {
    write_arm_traj_csv(fs::path(config.out) / "arm_traj.csv", result.trajectory);
  }

  const int last = std::min(10, exp.task.n_reaches);
  std::vector<ArmController> order{ArmController::PDNoLoad, ArmController::PD};
  for (ArmController c : config.arm.controllers) {
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  out << "arm: mean percent error over the last " << last << " reaches\n";
  for (ArmController c : order) {
    double sum = 0.0;
    int n = 0;
    for (const TrialRecord& r : result.records) {
      if (r.controller == c && r.trial >= exp.task.n_reaches - last) {
        sum += r.error_pct;
        ++n;
      }
    }
    out << "  " << to_string(c) << ' ' << (n ? format_double(sum / n) : std::string("n/a")) << '\n';
  }
  if (!result.failures.empty()) {
    std::string all;
    for (const std::string& f : result.failures) all += "\n  " + f;
    throw Divergence{"arm sessions diverged:" + all};
  }
}

void run_rover(const RunConfig& config, std::ostream& out) {
  const RoverConfig rc = rover_config(config);
  rc.params.validate();
  rc.qspec.validate();
  const RoverRun run = run_rover_task(rc, config.seed, config.backend, config.rover.controller);

  prepare_output(config);
  write_rover_traj_csv(fs::path(config.out) / "rover_traj.csv", run);
  write_rover_captures_csv(fs::path(config.out) / "rover_captures.csv", run);
  out << "rover: captured " << run.n_captured() << " of " << run.captures.size() << " targets ("
      << (config.rover.controller == RoverController::Neural ? to_string(config.backend) : "analytic")
      << ")\n";
  for (const RoverCapture& c : run.captures) {
    out << "  target " << c.target_index << " t_capture " << format_double(c.t_capture) << " s\n";
  }
}

void run_bench(const RunConfig& config, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  const double duration = config.rover.bench_duration;
  if (!(duration > 0.0)) throw Error(ErrorKind::InvalidParam, "bench_duration must be > 0");
  out << "backend,n_neurons,compile_s,wall_s_per_sim_s\n";
  for (Backend backend : {Backend::Reference, Backend::FixedPoint}) {
    for (int n : {512, 4096}) {
      RoverConfig rc = rover_config(config);
      rc.net.n_neurons = n;
      BuildConfig build;
      build.qspec = rc.qspec;
      const auto t0 = clock::now();
      Simulator sim(compile(validate_graph(build_rover_net(rc, config.seed)).value(), backend, build));
      const auto t1 = clock::now();
      const StepInputs inputs{{"target", Eigen::Vector2d(1.0, 2.0)}, {"q", Eigen::VectorXd::Constant(1, 0.1)}};
      const long long steps = std::llround(duration / rc.dt);
      for (long long s = 0; s < steps; ++s) sim.step(inputs);
      const auto t2 = clock::now();
      const double compile_s = std::chrono::duration<double>(t1 - t0).count();
      const double run_s = std::chrono::duration<double>(t2 - t1).count();
      out << to_string(backend) << ',' << n << ',' << compile_s << ','
          << run_s / (static_cast<double>(steps) * rc.dt) << '\n';
    }
  }
}

bool is_divergence(ErrorKind kind) {
  return kind == ErrorKind::DivergedLearning || kind == ErrorKind::NonFiniteState ||
         kind == ErrorKind::NonFiniteSignal;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking neural network control experiments", "snnbot"};
  app.require_subcommand(1, 1);
  app.footer("\n" + config_help());

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  struct Command {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"tune", "rate-curve sweep of float and quantized neurons (tune.csv)", run_tune},
      {"solve", "decode a function with one ensemble (solve.csv)", run_solve},
      {"convert", "dense network to spiking network fidelity (fidelity.csv)", run_convert},
      {"arm", "adaptive arm reaching experiment (arm_trials.csv, arm_traj.csv)", run_arm},
      {"rover", "rover target-seeking run (rover_traj.csv, rover_captures.csv)", run_rover},
      {"bench", "wall-clock per simulated second per backend (stdout only)", run_bench},
  };
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "configuration file");
    sub->add_option("--seed", seed, "root seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const Command* chosen = nullptr;
  for (const Command& c : commands) {
    if (app.got_subcommand(c.name)) chosen = &c;
  }
  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (out_dir) config.out = *out_dir;
    if (!(config.dt > 0.0)) throw Error(ErrorKind::InvalidParam, "dt must be > 0");
    chosen->run(config, out);
  } catch (const Divergence& d) {
    err << "divergence: " << d.what << '\n';
    return kExitDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_divergence(e.kind()) ? kExitDivergence : kExitValidation;
  }
  return kExitOk;
}

}  // namespace snnbot
