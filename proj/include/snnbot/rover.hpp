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

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/graph.hpp"
#include "snnbot/nef_build.hpp"
#include "snnbot/neurons.hpp"

namespace snnbot {

/// Kinematic bicycle parameters.
struct RoverParams {
  double wheelbase = 0.3;  // L, m
  double accel_gain = 2.0;  // c_a
  double drag = 0.5;        // c_d, 1/s
  double steer_rate = 4.0;  // c_s
  double q_max = 0.6;       // rad

  void validate() const;
};

/// Heading theta is the world angle of the rover's forward axis.
struct RoverState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double q = 0.0;
  double v = 0.0;
  double t = 0.0;
};

/// k_a * min(|(x, y)|, 1).
double accel_law(double x, double y, double k_a);

/// k_p * (atan2(-x, y) - q).
double steer_law(double x, double y, double q, double k_p);

/// v += dt (c_a u_accel - c_d v); q += dt c_s u_steer, clamped to +-q_max;
/// theta += dt (v / L) tan(q); position advances along the new heading.
RoverState rover_dynamics_step(const RoverState& state, double u_accel, double u_steer,
                               double dt, const RoverParams& params);

/// Target in the rover frame: +y forward, +x to the right.
Eigen::Vector2d world_to_body(const Eigen::Vector2d& target, const RoverState& pose);

struct RoverNetConfig {
  int n_neurons = 4096;
  Interval max_rates{175.0, 220.0};
  double k_a = 1.0;
  double k_p = 1.5;
  /// Scale of the target dimensions, m.
  double target_radius = 3.5;
  double input_synapse = 0.05;
  double q_synapse = 0.005;
  double output_synapse = 0.01;
  /// Targets closer than this are left out of the steering fit, m.
  double exclusion_radius = 0.1;
};

struct RoverTaskConfig {
  int n_targets = 6;
  double timeout = 30.0;
  double capture_radius = 0.5;
  double spawn_radius = 3.0;
  double noise_sigma = 0.05;
  /// Trajectory rows are kept every this many steps.
  int trajectory_stride = 10;
};

struct RoverConfig {
  RoverParams params;
  RoverNetConfig net;
  RoverTaskConfig task;
  double dt = 0.001;
  QuantizationSpec qspec;
};

/// Two ensembles fed from ExternalInput nodes "target" (x*, y*) and "q":
/// "accel" (2D) decodes the acceleration law and "steer" (3D) the steering
/// law, both into ExternalOutput "torque" = (u_accel, u_steer).
ModelGraph build_rover_net(const RoverConfig& config, std::uint64_t seed);

struct LawFidelity {
  double accel_rmse = 0.0;
  double steer_rmse = 0.0;
  /// Steering RMSE over targets ahead of the rover (y > 0), away from the
  /// atan2 branch cut behind it.
  double steer_rmse_ahead = 0.0;
  int n_points = 0;
};

/// Rate-mode decoded laws against the analytic laws over a grid of targets
/// inside the spawn disk (cell centres at spacing `grid_step`, skipping the exclusion
/// radius) and steering angles in {-q_max, -q_max/2, 0, q_max/2, q_max}.
LawFidelity evaluate_law_fidelity(const CompiledModel& model, const RoverConfig& config,
                                  double grid_step = 0.25);

enum class RoverController { Analytic, Neural };

struct RoverSample {
  double t;
  RoverState state;
  Eigen::Vector2d target;
  double u_steer;
  double u_accel;
};

struct RoverCapture {
  int target_index;
  Eigen::Vector2d spawn;
  /// Time from spawn to capture; NaN on timeout.
  double t_capture;
  bool captured;
};

struct RoverRun {
  std::vector<RoverSample> trajectory;
  std::vector<RoverCapture> captures;
  /// Time-averaged |network - analytic law| on the filtered inputs,
  /// normalised by each command's range (k_a and 2 k_p pi).
  double accel_disagreement = 0.0;
  double steer_disagreement = 0.0;
  double max_speed = 0.0;

  int n_captured() const;
};

/// Target positions drawn uniformly from the spawn disk.
std::vector<Eigen::Vector2d> spawn_targets(const RoverTaskConfig& task, std::uint64_t seed);

/// Closed-loop target seeking from rest at the origin facing +y. Each target
/// warps to the next on capture or timeout. `net` must come from
/// build_rover_net; a null `net` drives the plant with the analytic laws.
RoverRun run_rover_loop(const RoverConfig& config, const CompiledModel* net, std::uint64_t seed,
                        const std::vector<Eigen::Vector2d>& targets);

/// Builds, compiles and runs the task for `seed`.
RoverRun run_rover_task(const RoverConfig& config, std::uint64_t seed, Backend backend,
                        RoverController controller = RoverController::Neural);

void write_rover_traj_csv(const std::filesystem::path& path, const RoverRun& run);
void write_rover_captures_csv(const std::filesystem::path& path, const RoverRun& run);

}  // namespace snnbot
