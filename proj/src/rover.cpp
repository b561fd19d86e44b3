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

#include "snnbot/rover.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "snnbot/csv.hpp"
#include "snnbot/error.hpp"
#include "snnbot/rng.hpp"
#include "snnbot/simulator.hpp"

namespace snnbot {
namespace {

constexpr double kPi = std::numbers::pi;
// The steering ensemble sees (x/r, y/r, kQScale q/q_max); with |q| <= q_max
// the planar part may reach kPlanarMax while staying in the unit ball.
constexpr double kQScale = 0.5;
const double kPlanarMax = std::sqrt(1.0 - kQScale * kQScale);

double clipped_steer(double x, double y, double q, double k_p) {
  return std::clamp(steer_law(x, y, q, k_p), -k_p * kPi, k_p * kPi);
}

}  // namespace

void RoverParams::validate() const {
  if (!(wheelbase > 0.0)) throw Error(ErrorKind::InvalidParam, "wheelbase must be > 0");
  if (!(accel_gain > 0.0) || !(steer_rate > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "accel_gain and steer_rate must be > 0");
  }
  if (!(drag >= 0.0)) throw Error(ErrorKind::InvalidParam, "drag must be >= 0");
  if (!(q_max > 0.0 && q_max < kPi / 2)) throw Error(ErrorKind::InvalidParam, "q_max must be in (0, pi/2)");
}

double accel_law(double x, double y, double k_a) { return k_a * std::min(std::hypot(x, y), 1.0); }

double steer_law(double x, double y, double q, double k_p) { return k_p * (std::atan2(-x, y) - q); }

RoverState rover_dynamics_step(const RoverState& s, double u_accel, double u_steer, double dt,
                               const RoverParams& p) {
  if (!std::isfinite(u_accel) || !std::isfinite(u_steer)) {
    throw Error(ErrorKind::NonFiniteSignal, "non-finite rover command");
  }
  RoverState n = s;
  n.v = s.v + dt * (p.accel_gain * u_accel - p.drag * s.v);
  n.q = std::clamp(s.q + dt * p.steer_rate * u_steer, -p.q_max, p.q_max);
  n.theta = s.theta + dt * (n.v / p.wheelbase) * std::tan(n.q);
  n.x = s.x + dt * n.v * std::cos(n.theta);
  n.y = s.y + dt * n.v * std::sin(n.theta);
  n.t = s.t + dt;
  return n;
}

Eigen::Vector2d world_to_body(const Eigen::Vector2d& target, const RoverState& pose) {
  const Eigen::Vector2d d = target - Eigen::Vector2d(pose.x, pose.y);
  const Eigen::Vector2d forward(std::cos(pose.theta), std::sin(pose.theta));
  const Eigen::Vector2d right(std::sin(pose.theta), -std::cos(pose.theta));
  return {d.dot(right), d.dot(forward)};
}

ModelGraph build_rover_net(const RoverConfig& config, std::uint64_t seed) {
  config.params.validate();
  const RoverNetConfig& c = config.net;
  if (!(c.target_radius > 0.0)) throw Error(ErrorKind::InvalidParam, "target_radius must be > 0");
  const double k_a = c.k_a;
  const double k_p = c.k_p;
  const double r = c.target_radius;
  const double q_max = config.params.q_max;

  ModelGraph g(config.dt);
  Ensemble accel;
  accel.id = "accel";
  accel.n_neurons = c.n_neurons;
  accel.dimensions = 2;
  accel.max_rate_range = c.max_rates;
  accel.seed = derive_seed(seed, "rover/accel");
  Ensemble steer = accel;
  steer.id = "steer";
  steer.dimensions = 3;
  steer.radius = 1.0;
  steer.seed = derive_seed(seed, "rover/steer");
  // About half the ball lies in the cylinder, so sample twice as many points.
  steer.n_eval_points = 4 * std::max(250, c.n_neurons);
  g.add_ensemble(accel).add_ensemble(steer);

  g.add_node({"target", 2, NodeKind::ExternalInput});
  g.add_node({"q", 1, NodeKind::ExternalInput});
  g.add_node({"torque", 2, NodeKind::ExternalOutput});

  g.register_function("accel_law", {[k_a, r](const Eigen::VectorXd& v) {
                                       return Eigen::VectorXd::Constant(1, accel_law(r * v[0], r * v[1], k_a));
                                     },
                                     2, 1});
  const double exclusion = c.exclusion_radius / r;
  g.register_function(
      "steer_law",
      {[k_p, q_max](const Eigen::VectorXd& v) {
         return Eigen::VectorXd::Constant(1, clipped_steer(v[0], v[1], q_max * v[2] / kQScale, k_p));
       },
       3, 1, [exclusion](const Eigen::VectorXd& v) {
         const double planar = std::hypot(v[0], v[1]);
         return planar <= kPlanarMax && planar >= exclusion && std::abs(v[2]) <= kQScale;
       }});

  Eigen::MatrixXd to_steer = Eigen::MatrixXd::Zero(3, 2);
  to_steer(0, 0) = 1.0 / r;
  to_steer(1, 1) = 1.0 / r;
  Eigen::MatrixXd q_to_steer = Eigen::MatrixXd::Zero(3, 1);
  q_to_steer(2, 0) = kQScale / q_max;
  g.connect({.id = "target_accel", .source = "target", .target = "accel",
             .transform = Eigen::MatrixXd::Identity(2, 2) / r, .synapse = c.input_synapse});
  g.connect({.id = "target_steer", .source = "target", .target = "steer", .transform = to_steer,
             .synapse = c.input_synapse});
  g.connect({.id = "q_steer", .source = "q", .target = "steer", .transform = q_to_steer,
             .synapse = c.q_synapse});
  g.connect({.id = "accel_out", .source = "accel", .target = "torque", .function = "accel_law",
             .transform = Eigen::Vector2d(1.0, 0.0), .synapse = c.output_synapse});
  g.connect({.id = "steer_out", .source = "steer", .target = "torque", .function = "steer_law",
             .transform = Eigen::Vector2d(0.0, 1.0), .synapse = c.output_synapse});
  return g;
}

LawFidelity evaluate_law_fidelity(const CompiledModel& model, const RoverConfig& config,
                                  double grid_step) {
  const RoverNetConfig& c = config.net;
  const double r = c.target_radius;
  const double q_max = config.params.q_max;
  std::vector<Eigen::Vector2d> grid;
  const double span = config.task.spawn_radius;
  // Cell-centred so that no point sits on the x = 0, y < 0 branch cut,
  // where the steering law is ambiguous (+-pi).
  const int half = static_cast<int>(std::floor(span / grid_step));
  for (int i = -half; i < half; ++i) {
    for (int j = -half; j < half; ++j) {
      const Eigen::Vector2d p((i + 0.5) * grid_step, (j + 0.5) * grid_step);
      if (p.norm() <= span && p.norm() >= c.exclusion_radius) grid.push_back(p);
    }
  }
  const std::vector<double> qs{-q_max, -0.5 * q_max, 0.0, 0.5 * q_max, q_max};

  const CompiledEnsemble& accel = model.ensembles[*model.ensemble_index("accel")];
  const CompiledEnsemble& steer = model.ensembles[*model.ensemble_index("steer")];
  const Eigen::MatrixXd& d_accel = model.connection("accel_out").decoders;
  const Eigen::MatrixXd& d_steer = model.connection("steer_out").decoders;

  Eigen::MatrixXd xa(static_cast<Eigen::Index>(grid.size()), 2);
  for (std::size_t i = 0; i < grid.size(); ++i) xa.row(static_cast<Eigen::Index>(i)) = grid[i].transpose() / r;
  const Eigen::VectorXd ua = activity_matrix(accel, xa) * d_accel.col(0);
  double sa = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    sa += std::pow(ua[static_cast<Eigen::Index>(i)] - accel_law(grid[i][0], grid[i][1], c.k_a), 2);
  }

  Eigen::MatrixXd xs(static_cast<Eigen::Index>(grid.size() * qs.size()), 3);
  Eigen::VectorXd truth(xs.rows());
  Eigen::Index row = 0;
  for (const double q : qs) {
    for (const auto& p : grid) {
      xs.row(row) << p[0] / r, p[1] / r, kQScale * q / q_max;
      truth[row] = clipped_steer(p[0], p[1], q, c.k_p);
      ++row;
    }
  }
  const Eigen::VectorXd us = activity_matrix(steer, xs) * d_steer.col(0);
  LawFidelity out;
  double ahead = 0.0;
  long long n_ahead = 0;
  for (Eigen::Index k = 0; k < xs.rows(); ++k) {
    if (xs(k, 1) > 0.0) {
      ahead += std::pow(us[k] - truth[k], 2);
      ++n_ahead;
    }
  }
  out.steer_rmse_ahead = std::sqrt(ahead / static_cast<double>(n_ahead));
  out.n_points = static_cast<int>(grid.size());
  out.accel_rmse = std::sqrt(sa / static_cast<double>(grid.size()));
  out.steer_rmse = std::sqrt((us - truth).squaredNorm() / static_cast<double>(xs.rows()));
  return out;
}

int RoverRun::n_captured() const {
  return static_cast<int>(std::count_if(captures.begin(), captures.end(),
                                        [](const RoverCapture& c) { return c.captured; }));
}

std::vector<Eigen::Vector2d> spawn_targets(const RoverTaskConfig& task, std::uint64_t seed) {
  Rng rng(seed, "rover/targets");
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i < task.n_targets; ++i) {
    const double radius = task.spawn_radius * std::sqrt(rng.uniform());
    const double angle = 2.0 * kPi * rng.uniform();
    out.emplace_back(radius * std::cos(angle), radius * std::sin(angle));
  }
  return out;
}

RoverRun run_rover_loop(const RoverConfig& config, const CompiledModel* net, std::uint64_t seed,
                        const std::vector<Eigen::Vector2d>& targets) {
  config.params.validate();
  const RoverTaskConfig& task = config.task;
  const RoverNetConfig& c = config.net;
  const double dt = config.dt;
  const long long timeout_steps = std::llround(task.timeout / dt);
  Rng noise(seed, "rover/noise");

  std::optional<Simulator> sim;
  if (net) sim.emplace(*net);
  const double alpha_in = std::exp(-dt / c.input_synapse);
  const double alpha_q = std::exp(-dt / c.q_synapse);
  Eigen::Vector2d filtered_target = Eigen::Vector2d::Zero();
  double filtered_q = 0.0;
  double accel_diff = 0.0;
  double steer_diff = 0.0;
  long long compared = 0;

  RoverRun run;
  RoverState s;
  s.theta = kPi / 2.0;
  long long step = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Eigen::Vector2d& target = targets[i];
    const double spawn_t = s.t;
    for (long long k = 0;; ++k) {
      if ((target - Eigen::Vector2d(s.x, s.y)).norm() < task.capture_radius) {
        run.captures.push_back({static_cast<int>(i), target, s.t - spawn_t, true});
        break;
      }
      if (k >= timeout_steps) {
        run.captures.push_back({static_cast<int>(i), target, std::nan(""), false});
        break;
      }
      Eigen::Vector2d rel = world_to_body(target, s);
      if (task.noise_sigma > 0.0) {
        rel[0] += noise.normal(0.0, task.noise_sigma);
        rel[1] += noise.normal(0.0, task.noise_sigma);
      }
      double u_accel = 0.0;
      double u_steer = 0.0;
      if (sim) {
        sim->step({{"target", rel}, {"q", Eigen::VectorXd::Constant(1, s.q)}});
        const Eigen::VectorXd& torque = sim->node_value("torque");
        u_accel = torque[0];
        u_steer = torque[1];
        filtered_target = alpha_in * filtered_target + (1.0 - alpha_in) * rel;
        filtered_q = alpha_q * filtered_q + (1.0 - alpha_q) * s.q;
        accel_diff += std::abs(u_accel - accel_law(filtered_target[0], filtered_target[1], c.k_a));
        steer_diff += std::abs(u_steer - clipped_steer(filtered_target[0], filtered_target[1], filtered_q, c.k_p));
        ++compared;
      } else {
        u_accel = accel_law(rel[0], rel[1], c.k_a);
        u_steer = clipped_steer(rel[0], rel[1], s.q, c.k_p);
      }
      if (step % task.trajectory_stride == 0) run.trajectory.push_back({s.t, s, target, u_steer, u_accel});
      s = rover_dynamics_step(s, u_accel, u_steer, dt, config.params);
      run.max_speed = std::max(run.max_speed, s.v);
      ++step;
    }
  }
  if (compared > 0) {
    run.accel_disagreement = accel_diff / static_cast<double>(compared) / c.k_a;
    run.steer_disagreement = steer_diff / static_cast<double>(compared) / (2.0 * c.k_p * kPi);
  }
  return run;
}

RoverRun run_rover_task(const RoverConfig& config, std::uint64_t seed, Backend backend,
                        RoverController controller) {
  const auto targets = spawn_targets(config.task, seed);
  if (controller == RoverController::Analytic) return run_rover_loop(config, nullptr, seed, targets);
  BuildConfig build;
  build.qspec = config.qspec;
  const CompiledModel net = compile(validate_graph(build_rover_net(config, seed)).value(), backend, build);
  return run_rover_loop(config, &net, seed, targets);
}

void write_rover_traj_csv(const std::filesystem::path& path, const RoverRun& run) {
  CsvWriter csv(path, {"t", "x", "y", "theta", "q", "v", "target_x", "target_y", "u_steer", "u_accel"});
  for (const RoverSample& s : run.trajectory) {
    csv.row({s.t, s.state.x, s.state.y, s.state.theta, s.state.q, s.state.v, s.target[0], s.target[1],
             s.u_steer, s.u_accel});
  }
}

void write_rover_captures_csv(const std::filesystem::path& path, const RoverRun& run) {
  CsvWriter csv(path, {"target_idx", "spawn_x", "spawn_y", "t_capture"});
  for (const RoverCapture& c : run.captures) {
    csv.row({static_cast<long long>(c.target_index), c.spawn[0], c.spawn[1], c.t_capture});
  }
}

}  // namespace snnbot
