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

#include "snnbot/arm.hpp"

#include <algorithm>
#include <cmath>

#include "snnbot/csv.hpp"
#include "snnbot/error.hpp"
#include "snnbot/rng.hpp"
#include "snnbot/simulator.hpp"

namespace snnbot {
namespace {

// A rigid body riding on link `link` at distance `r` from that link's joint.
struct Body {
  int link;
  double r;
  double mass;
  double inertia;
};

std::vector<Body> bodies(const ArmModel& m) {
  std::vector<Body> out;
  for (int i = 0; i < 3; ++i) out.push_back({i, 0.5 * m.lengths[i], m.masses[i], m.inertias[i]});
  if (m.payload_mass > 0.0) out.push_back({2, m.lengths[2], m.payload_mass, 0.0});
  return out;
}

Eigen::Vector3d absolute_angles(const Eigen::Vector3d& q) {
  return Eigen::Vector3d(q[0], q[0] + q[1], q[0] + q[1] + q[2]);
}

double segment(const ArmModel& m, const Body& b, int k) { return k < b.link ? m.lengths[k] : b.r; }

Eigen::Vector2d body_position(const ArmModel& m, const Body& b, const Eigen::Vector3d& phi) {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  for (int k = 0; k <= b.link; ++k) p += segment(m, b, k) * Eigen::Vector2d(std::cos(phi[k]), std::sin(phi[k]));
  return p;
}

Matrix23d body_jacobian(const ArmModel& m, const Body& b, const Eigen::Vector3d& phi) {
  Matrix23d J = Matrix23d::Zero();
  for (int k = 0; k <= b.link; ++k) {
    const Eigen::Vector2d t = segment(m, b, k) * Eigen::Vector2d(-std::sin(phi[k]), std::cos(phi[k]));
    for (int j = 0; j <= k; ++j) J.col(j) += t;
  }
  return J;
}

// Body acceleration when q'' = 0.
Eigen::Vector2d centripetal(const ArmModel& m, const Body& b, const Eigen::Vector3d& phi,
                            const Eigen::Vector3d& omega) {
  Eigen::Vector2d a = Eigen::Vector2d::Zero();
  for (int k = 0; k <= b.link; ++k) {
    a -= segment(m, b, k) * omega[k] * omega[k] * Eigen::Vector2d(std::cos(phi[k]), std::sin(phi[k]));
  }
  return a;
}

Eigen::Vector3d angular_row(const Body& b) {
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  for (int j = 0; j <= b.link; ++j) w[j] = 1.0;
  return w;
}

// dT/dq at fixed velocity: 1/2 dq^T (dM/dq_k) dq for each k.
Eigen::Vector3d kinetic_gradient(const ArmModel& m, const Eigen::Vector3d& q,
                                 const Eigen::Vector3d& dq) {
  const Eigen::Vector3d phi = absolute_angles(q);
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (const Body& b : bodies(m)) {
    const Eigen::Vector2d vel = body_jacobian(m, b, phi) * dq;
    for (int k = 0; k < 3; ++k) {
      // d(J dq)/dq_k: every segment at or beyond joint k rotates.
      Eigen::Vector2d dv = Eigen::Vector2d::Zero();
      for (int s = k; s <= b.link; ++s) {
        double rate = 0.0;
        for (int j = 0; j <= s; ++j) rate += dq[j];
        dv -= segment(m, b, s) * rate * Eigen::Vector2d(std::cos(phi[s]), std::sin(phi[s]));
      }
      out[k] += b.mass * vel.dot(dv);
    }
  }
  return out;
}

bool is_adaptive(ArmController c) {
  return c == ArmController::AdaptiveReference || c == ArmController::AdaptiveFixedPoint;
}

CompiledModel build_adaptive_model(const ArmExperimentConfig& config, Backend backend,
                                   std::uint64_t session_seed) {
  const AdaptiveConfig& a = config.adaptive;
  ModelGraph g(config.dt);
  Ensemble e;
  e.id = "adapt";
  e.n_neurons = a.n_neurons;
  e.dimensions = 7;
  e.intercept_range = a.intercepts;
  e.max_rate_range = a.max_rates;
  e.seed = derive_seed(session_seed, "adaptive_ensemble");
  e.n_eval_points = 1;
  g.add_ensemble(e);
  g.add_node({"feedback", 7, NodeKind::ExternalInput});
  g.add_node({"error", 3, NodeKind::ExternalInput});
  g.add_node({"u_adapt", 3, NodeKind::ExternalOutput});
  g.connect({.id = "feedback_in", .source = "feedback", .target = "adapt"});
  // The learned mapping starts at zero; the transform only fixes its shape.
  g.connect({.id = "learn",
             .source = "adapt",
             .target = "u_adapt",
             .transform = Eigen::MatrixXd::Zero(3, 7),
             .synapse = a.synapse,
             .learning = PESConfig{a.learning_rate, "error"}});
  BuildConfig build;
  build.qspec = config.qspec;
  return compile(validate_graph(g).value(), backend, build);
}

}  // namespace

void ArmModel::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(lengths[i] > 0.0)) throw Error(ErrorKind::InvalidParam, "link lengths must be > 0");
    if (!(masses[i] > 0.0)) throw Error(ErrorKind::InvalidParam, "link masses must be > 0");
    if (!(inertias[i] >= 0.0)) throw Error(ErrorKind::InvalidParam, "link inertias must be >= 0");
    if (!(limits[i].lo < limits[i].hi)) throw Error(ErrorKind::InvalidParam, "joint limits must have lo < hi");
  }
  if (!(payload_mass >= 0.0)) throw Error(ErrorKind::InvalidParam, "payload_mass must be >= 0");
  if (!std::isfinite(gravity)) throw Error(ErrorKind::InvalidParam, "gravity must be finite");
}

ArmModel ArmModel::nominal() const {
  ArmModel m = *this;
  m.payload_mass = 0.0;
  return m;
}

Kinematics forward_kinematics(const ArmModel& model, const Eigen::Vector3d& q) {
  const Body hand{2, model.lengths[2], 0.0, 0.0};
  const Eigen::Vector3d phi = absolute_angles(q);
  return {body_position(model, hand, phi), body_jacobian(model, hand, phi)};
}

Eigen::Matrix3d mass_matrix(const ArmModel& model, const Eigen::Vector3d& q) {
  const Eigen::Vector3d phi = absolute_angles(q);
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  for (const Body& b : bodies(model)) {
    const Matrix23d J = body_jacobian(model, b, phi);
    const Eigen::Vector3d w = angular_row(b);
    M += b.mass * J.transpose() * J + b.inertia * w * w.transpose();
  }
  return M;
}

Eigen::Vector3d gravity_torque(const ArmModel& model, const Eigen::Vector3d& q) {
  const Eigen::Vector3d phi = absolute_angles(q);
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  for (const Body& b : bodies(model)) {
    g += b.mass * model.gravity * body_jacobian(model, b, phi).row(1).transpose();
  }
  return g;
}

Eigen::Vector3d coriolis_torque(const ArmModel& model, const Eigen::Vector3d& q,
                                const Eigen::Vector3d& dq) {
  const Eigen::Vector3d phi = absolute_angles(q);
  const Eigen::Vector3d omega = absolute_angles(dq);
  Eigen::Vector3d h = Eigen::Vector3d::Zero();
  for (const Body& b : bodies(model)) {
    h += b.mass * body_jacobian(model, b, phi).transpose() * centripetal(model, b, phi, omega);
  }
  return h;
}

double mechanical_energy(const ArmModel& model, const ArmState& state) {
  const Eigen::Vector3d phi = absolute_angles(state.q);
  double potential = 0.0;
  for (const Body& b : bodies(model)) potential += b.mass * model.gravity * body_position(model, b, phi)[1];
  return 0.5 * state.dq.dot(mass_matrix(model, state.q) * state.dq) + potential;
}

ArmState arm_dynamics_step(const ArmModel& model, const ArmState& state,
                           const Eigen::Vector3d& u, double dt) {
  if (!u.allFinite()) throw Error(ErrorKind::NonFiniteState, "non-finite joint torque");
  // Stormer-Verlet on p = M(q) dq. The implicit half-steps are resolved by
  // fixed-point iteration; dt * |dq| is small at control rates.
  const double h = 0.5 * dt;
  const auto converged = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return !((a - b).lpNorm<Eigen::Infinity>() > 1e-13 * (1.0 + b.lpNorm<Eigen::Infinity>()));
  };
  const Eigen::Matrix3d m0 = mass_matrix(model, state.q);
  const Eigen::LLT<Eigen::Matrix3d> llt0 = m0.llt();
  const Eigen::Vector3d p0 = m0 * state.dq;
  const Eigen::Vector3d f0 = u - gravity_torque(model, state.q);
  Eigen::Vector3d v0 = state.dq;
  Eigen::Vector3d p_half = p0;
  for (int iter = 0; iter < 50; ++iter) {
    p_half = p0 + h * (f0 + kinetic_gradient(model, state.q, v0));
    const Eigen::Vector3d v = llt0.solve(p_half);
    const bool done = converged(v, v0);
    v0 = v;
    if (done) break;
  }
  Eigen::Vector3d q1 = state.q + dt * v0;
  Eigen::LLT<Eigen::Matrix3d> llt1 = mass_matrix(model, q1).llt();
  for (int iter = 0; iter < 50; ++iter) {
    const Eigen::Vector3d q = state.q + h * (v0 + llt1.solve(p_half));
    const bool done = converged(q, q1);
    q1 = q;
    llt1 = mass_matrix(model, q1).llt();
    if (done) break;
  }
  const Eigen::Vector3d v1 = llt1.solve(p_half);
  const Eigen::Vector3d p1 =
      p_half + h * (u - gravity_torque(model, q1) + kinetic_gradient(model, q1, v1));
  ArmState next;
  next.q = q1;
  next.dq = llt1.solve(p1);
  next.t = state.t + dt;
  for (int i = 0; i < 3; ++i) {
    if (next.q[i] < model.limits[i].lo || next.q[i] > model.limits[i].hi) {
      next.q[i] = std::clamp(next.q[i], model.limits[i].lo, model.limits[i].hi);
      next.dq[i] = 0.0;
    }
  }
  if (!next.q.allFinite() || !next.dq.allFinite()) {
    throw Error(ErrorKind::NonFiniteState, "arm state became non-finite");
  }
  return next;
}

Eigen::Matrix2d task_inertia(const Eigen::Matrix3d& mass, const Matrix23d& jacobian,
                             double sigma_min_ratio) {
  const Eigen::Matrix2d inv = jacobian * mass.llt().solve(jacobian.transpose());
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(inv, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector2d s = svd.singularValues();
  Eigen::Matrix2d out = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 2; ++i) {
    if (s[i] > 0.0 && s[i] >= sigma_min_ratio * s[0]) {
      out += svd.matrixV().col(i) * svd.matrixU().col(i).transpose() / s[i];
    }
  }
  return out;
}

namespace {

struct OscTerms {
  Eigen::Vector3d u;
  Matrix23d jacobian;
  Eigen::Matrix2d task_mass;
  Eigen::Vector2d x;
};

OscTerms osc_terms(const ArmModel& nominal, const ArmState& state, const Eigen::Vector2d& target,
                   const OscConfig& c) {
  const Kinematics kin = forward_kinematics(nominal, state.q);
  const Eigen::Matrix3d M = mass_matrix(nominal, state.q);
  const Eigen::Matrix2d Mx = task_inertia(M, kin.jacobian, c.sigma_min_ratio);
  const Eigen::Vector2d force = c.kp * (target - kin.x) - c.kv * (kin.jacobian * state.dq);
  const Eigen::Matrix<double, 3, 2> jbar = M.llt().solve(kin.jacobian.transpose()) * Mx;
  const Eigen::Matrix3d null_t = Eigen::Matrix3d::Identity() - kin.jacobian.transpose() * jbar.transpose();
  const Eigen::Vector3d posture = M * (c.null_kp * (c.posture - state.q) - c.null_kv * state.dq);
  const Eigen::Vector3d u =
      gravity_torque(nominal, state.q) + kin.jacobian.transpose() * (Mx * force) + null_t * posture;
  return {u, kin.jacobian, Mx, kin.x};
}

}  // namespace

Eigen::Vector3d osc_pd(const ArmModel& nominal, const ArmState& state,
                       const Eigen::Vector2d& target, const OscConfig& config) {
  return osc_terms(nominal, state, target, config).u;
}

Eigen::Vector3d osc_pid(const ArmModel& nominal, const ArmState& state,
                        const Eigen::Vector2d& target, const OscConfig& config,
                        Eigen::Vector2d& integral, double dt) {
  const OscTerms terms = osc_terms(nominal, state, target, config);
  integral += (target - terms.x) * dt;
  integral = integral.cwiseMax(-config.integral_clamp).cwiseMin(config.integral_clamp);
  return terms.u + terms.jacobian.transpose() * (terms.task_mass * (config.ki * integral));
}

Eigen::VectorXd normalize_feedback(const Eigen::Vector3d& q, const Eigen::Vector3d& dq,
                                   const std::array<Interval, 3>& limits,
                                   double velocity_bound) {
  Eigen::VectorXd v(6);
  for (int i = 0; i < 3; ++i) {
    const double mid = 0.5 * (limits[i].lo + limits[i].hi);
    const double half = 0.5 * (limits[i].hi - limits[i].lo);
    v[i] = (q[i] - mid) / half;
    v[3 + i] = dq[i] / velocity_bound;
  }
  return v.cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::VectorXd project_hypersphere(const Eigen::VectorXd& v) {
  const Eigen::Index d = v.size();
  Eigen::VectorXd out(d + 1);
  out.head(d) = v / std::sqrt(static_cast<double>(d));
  out[d] = std::sqrt(std::max(0.0, 1.0 - out.head(d).squaredNorm()));
  return out;
}

std::string_view to_string(ArmController controller) {
  switch (controller) {
    case ArmController::PDNoLoad: return "PD_noload";
    case ArmController::PD: return "PD_load";
    case ArmController::PID: return "PID";
    case ArmController::AdaptiveReference: return "adaptive_reference";
    case ArmController::AdaptiveFixedPoint: return "adaptive_fixed";
  }
  return "?";
}

void ReachTask::validate(const ArmModel& model) const {
  const double reach = model.lengths[0] + model.lengths[1] + model.lengths[2];
  if (!(target.norm() < reach)) throw Error(ErrorKind::InvalidParam, "target outside the reachable workspace");
  if (!(duration > 0.0)) throw Error(ErrorKind::InvalidParam, "reach duration must be > 0");
  if (n_reaches < 1 || n_sessions < 1) throw Error(ErrorKind::InvalidParam, "n_reaches and n_sessions must be >= 1");
  if (!(path_tau > 0.0)) throw Error(ErrorKind::InvalidParam, "path_tau must be > 0");
}

SessionResult run_reach_session(const ArmExperimentConfig& config, ArmController controller,
                                std::uint64_t session_seed,
                                std::vector<ArmTrajectorySample>* trace) {
  config.plant.validate();
  config.task.validate(config.plant);
  const ArmModel nominal = config.plant.nominal();
  const ArmModel plant = controller == ArmController::PDNoLoad ? nominal : config.plant;
  const ReachTask& task = config.task;
  const double dt = config.dt;
  const long long steps = std::llround(task.duration / dt);

  std::optional<Simulator> sim;
  if (is_adaptive(controller)) {
    const Backend backend =
        controller == ArmController::AdaptiveFixedPoint ? Backend::FixedPoint : Backend::Reference;
    sim.emplace(build_adaptive_model(config, backend, session_seed));
  }

  SessionResult result;
  try {
    for (int reach = 0; reach < task.n_reaches; ++reach) {
      const bool record = trace && reach + 1 == task.n_reaches;
      ArmState state{task.q0, Eigen::Vector3d::Zero(), 0.0};
      Eigen::Vector2d x_ref = forward_kinematics(plant, task.q0).x;
      Eigen::Vector2d v_ref = Eigen::Vector2d::Zero();
      Eigen::Vector2d integral = Eigen::Vector2d::Zero();
      Eigen::Vector3d u_adapt = Eigen::Vector3d::Zero();
      double error_sum = 0.0;
      for (long long k = 0; k < steps; ++k) {
        const Eigen::Vector2d a_ref =
            (task.target - x_ref) / (task.path_tau * task.path_tau) - 2.0 * v_ref / task.path_tau;
        v_ref += a_ref * dt;
        x_ref += v_ref * dt;

        const Eigen::Vector3d u_ctrl =
            controller == ArmController::PID
                ? osc_pid(nominal, state, x_ref, config.osc, integral, dt)
                : osc_pd(nominal, state, x_ref, config.osc);
        if (sim) {
          const Eigen::VectorXd feedback = project_hypersphere(
              normalize_feedback(state.q, state.dq, config.plant.limits, config.adaptive.velocity_bound));
          const Eigen::VectorXd error = -(u_ctrl - gravity_torque(nominal, state.q));
          sim->step({{"feedback", feedback}, {"error", error}});
          u_adapt = sim->node_value("u_adapt");
          result.max_u_adapt = std::max(result.max_u_adapt, u_adapt.norm());
        }
        const Eigen::Vector3d u = u_ctrl + u_adapt;
        state = arm_dynamics_step(plant, state, u, dt);
        const Eigen::Vector2d x = forward_kinematics(plant, state.q).x;
        error_sum += (x - task.target).norm();
        if (record) trace->push_back({state.t, state.q, x, x_ref, u, u_adapt});
      }
      result.errors.push_back(error_sum / static_cast<double>(steps));
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DivergedLearning && e.kind() != ErrorKind::NonFiniteState &&
        e.kind() != ErrorKind::NonFiniteSignal) {
      throw;
    }
    result.diverged = true;
    result.failure = e.what();
  }
  return result;
}

std::uint64_t arm_session_seed(std::uint64_t seed, int session) {
  return derive_seed(seed, "arm/session/" + std::to_string(session));
}

ArmExperimentResult run_reach_experiment(const ArmExperimentConfig& config,
                                         const std::vector<ArmController>& controllers,
                                         std::uint64_t seed) {
  std::vector<ArmController> order{ArmController::PDNoLoad, ArmController::PD};
  for (ArmController c : controllers) {
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  ArmExperimentResult out;
  for (ArmController c : order) {
    if (is_adaptive(c)) {
      out.trajectory_controller = c;
      break;
    }
  }
  if (!is_adaptive(out.trajectory_controller)) out.trajectory_controller = order.back();

  for (int s = 0; s < config.task.n_sessions; ++s) {
    const std::uint64_t session_seed = arm_session_seed(seed, s);
    std::vector<double> e0;
    std::vector<double> e1;
    for (ArmController c : order) {
      auto* trace = s == 0 && c == out.trajectory_controller ? &out.trajectory : nullptr;
      SessionResult r = run_reach_session(config, c, session_seed, trace);
      if (r.diverged) {
        out.failures.push_back("session " + std::to_string(s) + " " + std::string(to_string(c)) +
                               ": " + r.failure);
      }
      if (is_adaptive(c)) out.max_u_adapt.emplace_back(c, r.max_u_adapt);
      if (c == ArmController::PDNoLoad) e0 = r.errors;
      if (c == ArmController::PD) e1 = r.errors;
      for (std::size_t t = 0; t < r.errors.size(); ++t) {
        TrialRecord rec{s, static_cast<int>(t), c, r.errors[t], 0.0};
        if (t < e0.size() && t < e1.size()) {
          const double span = e1[t] - e0[t];
          rec.error_pct = span != 0.0 ? 100.0 * ((r.errors[t] - e0[t]) / span) : 0.0;
        }
        out.records.push_back(rec);
      }
    }
  }
  return out;
}

void write_arm_trials_csv(const std::filesystem::path& path,
                          const std::vector<TrialRecord>& records) {
  CsvWriter csv(path, {"session", "trial", "controller", "error_raw", "error_pct"});
  for (const TrialRecord& r : records) {
    csv.row({static_cast<long long>(r.session), static_cast<long long>(r.trial),
             std::string(to_string(r.controller)), r.error_raw, r.error_pct});
  }
}

void write_arm_traj_csv(const std::filesystem::path& path,
                        const std::vector<ArmTrajectorySample>& samples) {
  CsvWriter csv(path, {"t", "q1", "q2", "q3", "x", "y", "x_target", "y_target", "u1", "u2", "u3",
                       "u_adapt1", "u_adapt2", "u_adapt3"});
  for (const ArmTrajectorySample& s : samples) {
    csv.row({s.t, s.q[0], s.q[1], s.q[2], s.x[0], s.x[1], s.target[0], s.target[1], s.u[0], s.u[1],
             s.u[2], s.u_adapt[0], s.u_adapt[1], s.u_adapt[2]});
  }
}

double error_trend_slope(const std::vector<double>& errors) {
  const double n = static_cast<double>(errors.size());
  if (errors.size() < 2) return 0.0;
  const double mean_t = 0.5 * (n - 1.0);
  double mean_e = 0.0;
  for (double e : errors) mean_e += e;
  mean_e /= n;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double dt = static_cast<double>(i) - mean_t;
    num += dt * (errors[i] - mean_e);
    den += dt * dt;
  }
  return num / den;
}

}  // namespace snnbot
