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

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/graph.hpp"
#include "snnbot/nef_build.hpp"
#include "snnbot/neurons.hpp"

namespace snnbot {

using Matrix23d = Eigen::Matrix<double, 2, 3>;

/// Planar 3-link arm. Joint angles are relative; the zero pose points along
/// +x and gravity acts along -y. The payload is a point mass at the hand that
/// only the plant sees.
struct ArmModel {
  std::array<double, 3> lengths{0.3, 0.3, 0.2};
  std::array<double, 3> masses{5.0, 4.0, 2.5};
  /// Rotational inertia of each link about its centre of mass.
  std::array<double, 3> inertias{0.0375, 0.03, 0.008333333333333333};
  double gravity = 9.81;
  std::array<Interval, 3> limits{Interval{-3.14159, 3.14159}, Interval{-2.6, 2.6},
                                 Interval{-2.6, 2.6}};
  double payload_mass = 1.0;

  void validate() const;
  /// The controller's view of the plant: identical but without payload.
  ArmModel nominal() const;
};

struct ArmState {
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  Eigen::Vector3d dq = Eigen::Vector3d::Zero();
  double t = 0.0;
};

struct Kinematics {
  Eigen::Vector2d x;
  Matrix23d jacobian;
};

Kinematics forward_kinematics(const ArmModel& model, const Eigen::Vector3d& q);
Eigen::Matrix3d mass_matrix(const ArmModel& model, const Eigen::Vector3d& q);
/// Torque that holds the arm still against gravity.
Eigen::Vector3d gravity_torque(const ArmModel& model, const Eigen::Vector3d& q);
/// Coriolis and centripetal torque C(q, dq) dq.
Eigen::Vector3d coriolis_torque(const ArmModel& model, const Eigen::Vector3d& q,
                                const Eigen::Vector3d& dq);
/// Kinetic plus potential energy (potential measured from y = 0).
double mechanical_energy(const ArmModel& model, const ArmState& state);

/// Symplectic (Stormer-Verlet) step of M q'' + C q' + g = u. Joints leaving their
/// limits are clamped and stopped.
ArmState arm_dynamics_step(const ArmModel& model, const ArmState& state,
                           const Eigen::Vector3d& u, double dt);

struct OscConfig {
  double kp = 30.0;
  double kv = 10.954451150103322;  // 2 * sqrt(30)
  double ki = 5.0;
  double integral_clamp = 10.0;
  double sigma_min_ratio = 1e-3;
  /// Joint-space posture control projected into the task null space.
  double null_kp = 10.0;
  double null_kv = 6.324555320336759;  // 2 * sqrt(10)
  Eigen::Vector3d posture = Eigen::Vector3d(0.9, 0.8, -2.2);
};

/// Task-space inertia (J M^-1 J^T)^-1 by SVD, dropping singular values
/// below sigma_min_ratio times the largest.
Eigen::Matrix2d task_inertia(const Eigen::Matrix3d& mass, const Matrix23d& jacobian,
                             double sigma_min_ratio);

Eigen::Vector3d osc_pd(const ArmModel& nominal, const ArmState& state,
                       const Eigen::Vector2d& target, const OscConfig& config);

/// Accumulates the task error into `integral` (clamped elementwise to
/// +-integral_clamp) and adds J^T M_x ki integral to the PD torque.
Eigen::Vector3d osc_pid(const ArmModel& nominal, const ArmState& state,
                        const Eigen::Vector2d& target, const OscConfig& config,
                        Eigen::Vector2d& integral, double dt);

/// Maps (q, dq) to [-1, 1]^6: (v - midpoint) / half-range, clipped.
Eigen::VectorXd normalize_feedback(const Eigen::Vector3d& q, const Eigen::Vector3d& dq,
                                   const std::array<Interval, 3>& limits,
                                   double velocity_bound);

/// Lifts v in [-1, 1]^D onto the unit sphere in D + 1 dimensions:
/// s = v / sqrt(D), output (s, sqrt(1 - |s|^2)).
Eigen::VectorXd project_hypersphere(const Eigen::VectorXd& v);

enum class ArmController { PDNoLoad, PD, PID, AdaptiveReference, AdaptiveFixedPoint };

std::string_view to_string(ArmController controller);

struct ReachTask {
  Eigen::Vector3d q0 = Eigen::Vector3d(0.9, 0.8, -2.2);
  Eigen::Vector2d target = Eigen::Vector2d(0.5, 0.25);
  double duration = 4.0;
  int n_reaches = 50;
  int n_sessions = 5;
  /// Time constant of the critically damped path filter.
  double path_tau = 0.3;

  void validate(const ArmModel& model) const;
};

struct AdaptiveConfig {
  int n_neurons = 1000;
  double learning_rate = 1e-4;
  Interval intercepts{-0.5, 0.5};
  Interval max_rates{200.0, 400.0};
  double velocity_bound = 2.0;
  double synapse = 0.005;
  /// Empirical bound on |u_adapt| checked across runs.
  double u_adapt_ceiling = 50.0;
};

struct ArmExperimentConfig {
  ArmModel plant;
  ReachTask task;
  OscConfig osc;
  AdaptiveConfig adaptive;
  double dt = 0.001;
  QuantizationSpec qspec;
};

struct TrialRecord {
  int session = 0;
  int trial = 0;
  ArmController controller = ArmController::PD;
  double error_raw = 0.0;
  double error_pct = 0.0;
};

struct ArmTrajectorySample {
  double t;
  Eigen::Vector3d q;
  Eigen::Vector2d x;
  Eigen::Vector2d target;
  Eigen::Vector3d u;
  Eigen::Vector3d u_adapt;
};

struct SessionResult {
  /// Mean hand-to-target distance for each completed reach.
  std::vector<double> errors;
  double max_u_adapt = 0.0;
  bool diverged = false;
  std::string failure;
};

/// Runs one session of `n_reaches` reaches; adaptive decoders persist across
/// reaches and start from zero. Trajectory samples of the final reach are
/// appended to `trace` when given.
SessionResult run_reach_session(const ArmExperimentConfig& config, ArmController controller,
                                std::uint64_t session_seed,
                                std::vector<ArmTrajectorySample>* trace = nullptr);

struct ArmExperimentResult {
  std::vector<TrialRecord> records;
  /// Largest |u_adapt| seen per adaptive controller and session.
  std::vector<std::pair<ArmController, double>> max_u_adapt;
  std::vector<std::string> failures;
  std::vector<ArmTrajectorySample> trajectory;
  ArmController trajectory_controller = ArmController::AdaptiveReference;
};

/// Runs both PD baselines, then every controller in `controllers`, for all
/// sessions. Percent errors are 100 (E - E0) / (E1 - E0) against the
/// no-load (E0) and loaded (E1) PD errors of the same session and reach.
ArmExperimentResult run_reach_experiment(const ArmExperimentConfig& config,
                                         const std::vector<ArmController>& controllers,
                                         std::uint64_t seed);

std::uint64_t arm_session_seed(std::uint64_t seed, int session);

void write_arm_trials_csv(const std::filesystem::path& path,
                          const std::vector<TrialRecord>& records);
void write_arm_traj_csv(const std::filesystem::path& path,
                        const std::vector<ArmTrajectorySample>& samples);

/// Least-squares slope of errors against reach index.
double error_trend_slope(const std::vector<double>& errors);

}  // namespace snnbot
