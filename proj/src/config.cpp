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

#include "snnbot/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "snnbot/csv.hpp"
#include "snnbot/error.hpp"

namespace snnbot {
namespace {

// Thrown by value parsers; carries the expected type description.
struct BadValue {
  std::string expected;
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) items.push_back(trim(item));
  if (items.size() == 1 && items[0].empty()) items.clear();
  return items;
}

double to_real(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw BadValue{"real"};
  }
  if (used != v.size() || !std::isfinite(x)) throw BadValue{"real"};
  return x;
}

long long to_integer(const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw BadValue{"integer"};
  }
  if (used != v.size()) throw BadValue{"integer"};
  return x;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

ArmController arm_controller_from_string(const std::string& name) {
  for (ArmController c : {ArmController::PDNoLoad, ArmController::PD, ArmController::PID,
                          ArmController::AdaptiveReference, ArmController::AdaptiveFixedPoint}) {
    if (to_string(c) == name) return c;
  }
  throw BadValue{"list of PD_noload, PD_load, PID, adaptive_reference, adaptive_fixed"};
}

struct KeyDef {
  std::string section;
  std::string name;
  std::string type;
  std::string unit;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Access>
KeyDef real_key(std::string section, std::string name, std::string unit, std::string help, Access acc) {
  return {std::move(section), std::move(name), "real", std::move(unit), std::move(help),
          [acc](const RunConfig& c) { return format_double(acc(const_cast<RunConfig&>(c))); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = to_real(v); }};
}

template <class Access>
KeyDef int_key(std::string section, std::string name, std::string unit, std::string help, Access acc) {
  return {std::move(section), std::move(name), "integer", std::move(unit), std::move(help),
          [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
          [acc](RunConfig& c, const std::string& v) {
            const long long x = to_integer(v);
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
              throw BadValue{"integer"};
            }
            acc(c) = static_cast<int>(x);
          }};
}

template <class Access>
KeyDef bool_key(std::string section, std::string name, std::string help, Access acc) {
  return {std::move(section), std::move(name), "bool", "", std::move(help),
          [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [acc](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1" || v == "yes") {
              acc(c) = true;
            } else if (v == "false" || v == "0" || v == "no") {
              acc(c) = false;
            } else {
              throw BadValue{"bool"};
            }
          }};
}

template <class Access>
KeyDef string_key(std::string section, std::string name, std::string unit, std::string help, Access acc) {
  return {std::move(section), std::move(name), "string", std::move(unit), std::move(help),
          [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = v; }};
}

// Fixed-length list of reals stored in anything indexable.
template <int N, class Access>
KeyDef vec_key(std::string section, std::string name, std::string unit, std::string help, Access acc) {
  const std::string type = "list of " + std::to_string(N) + " reals";
  return {std::move(section), std::move(name), type, std::move(unit), std::move(help),
          [acc](const RunConfig& c) {
            auto& v = acc(const_cast<RunConfig&>(c));
            std::vector<std::string> items;
            for (int i = 0; i < N; ++i) items.push_back(format_double(v[i]));
            return join(items);
          },
          [acc, type](RunConfig& c, const std::string& text) {
            const std::vector<std::string> items = split_list(text);
            if (items.size() != N) throw BadValue{type};
            auto& v = acc(c);
            for (int i = 0; i < N; ++i) {
              try {
                v[i] = to_real(items[static_cast<std::size_t>(i)]);
              } catch (const BadValue&) {
                throw BadValue{type};
              }
            }
          }};
}

template <class Enum, class Access>
KeyDef choice_key(std::string section, std::string name, std::string help,
                  std::vector<std::pair<std::string, Enum>> options, Access acc) {
  std::vector<std::string> names;
  for (const auto& o : options) names.push_back(o.first);
  const std::string type = "one of " + join(names);
  return {std::move(section), std::move(name), type, "", std::move(help),
          [acc, options](const RunConfig& c) {
            const Enum v = acc(const_cast<RunConfig&>(c));
            for (const auto& o : options) {
              if (o.second == v) return o.first;
            }
            return std::string("?");
          },
          [acc, options, type](RunConfig& c, const std::string& v) {
            for (const auto& o : options) {
              if (o.first == v) {
                acc(c) = o.second;
                return;
              }
            }
            throw BadValue{type};
          }};
}

std::vector<KeyDef> build_schema() {
  std::vector<KeyDef> k;
  const std::string G = "global";
  k.push_back(real_key(G, "dt", "s", "simulation time step", [](RunConfig& c) -> double& { return c.dt; }));
  k.push_back({G, "seed", "non-negative integer", "", "root seed; --seed overrides",
               [](const RunConfig& c) { return std::to_string(c.seed); },
               [](RunConfig& c, const std::string& v) {
                 if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
                   throw BadValue{"non-negative integer"};
                 }
                 try {
                   c.seed = std::stoull(v);
                 } catch (const std::exception&) {
                   throw BadValue{"non-negative integer"};
                 }
               }});
  k.push_back(choice_key<Backend>(G, "backend", "backend for the rover network",
                                  {{"reference", Backend::Reference}, {"fixed", Backend::FixedPoint}},
                                  [](RunConfig& c) -> Backend& { return c.backend; }));
  k.push_back(string_key(G, "out", "path", "output directory; --out overrides",
                         [](RunConfig& c) -> std::string& { return c.out; }));

  const std::string N = "neurons";
  k.push_back(choice_key<NeuronModel>(
      N, "model", "neuron model for tune and solve",
      {{"LIF", NeuronModel::LIF},
       {"SpikingRectifiedLinear", NeuronModel::SpikingRectifiedLinear},
       {"RateLIF", NeuronModel::RateLIF},
       {"RateRectifiedLinear", NeuronModel::RateRectifiedLinear}},
      [](RunConfig& c) -> NeuronModel& { return c.neurons.model; }));
  k.push_back(real_key(N, "tau_rc", "s", "LIF membrane time constant",
                       [](RunConfig& c) -> double& { return c.neurons.params.tau_rc; }));
  k.push_back(real_key(N, "tau_ref", "s", "LIF refractory period",
                       [](RunConfig& c) -> double& { return c.neurons.params.tau_ref; }));
  k.push_back(real_key(N, "amplitude", "", "rectified-linear output scale",
                       [](RunConfig& c) -> double& { return c.neurons.params.amplitude; }));
  k.push_back(int_key(N, "weight_mantissa_bits", "bits", "fixed-point weight and current mantissa (all modules)",
                      [](RunConfig& c) -> int& { return c.neurons.qspec.weight_mantissa_bits; }));
  k.push_back(int_key(N, "state_bits", "bits", "fixed-point neuron state width (all modules)",
                      [](RunConfig& c) -> int& { return c.neurons.qspec.state_bits; }));
  k.push_back(real_key(N, "sweep_min", "", "tune: first input current",
                       [](RunConfig& c) -> double& { return c.neurons.sweep_min; }));
  k.push_back(real_key(N, "sweep_max", "", "tune: last input current",
                       [](RunConfig& c) -> double& { return c.neurons.sweep_max; }));
  k.push_back(real_key(N, "sweep_step", "", "tune: current increment",
                       [](RunConfig& c) -> double& { return c.neurons.sweep_step; }));
  k.push_back(real_key(N, "sweep_duration", "s", "tune: simulated time per current for the quantized rate",
                       [](RunConfig& c) -> double& { return c.neurons.sweep_duration; }));
  k.push_back(int_key(N, "n_neurons", "", "solve: ensemble size",
                      [](RunConfig& c) -> int& { return c.neurons.n_neurons; }));
  k.push_back(real_key(N, "max_rate_min", "Hz", "solve: lower max-rate bound",
                       [](RunConfig& c) -> double& { return c.neurons.max_rates.lo; }));
  k.push_back(real_key(N, "max_rate_max", "Hz", "solve: upper max-rate bound",
                       [](RunConfig& c) -> double& { return c.neurons.max_rates.hi; }));
  k.push_back(real_key(N, "intercept_min", "", "solve: lower intercept bound",
                       [](RunConfig& c) -> double& { return c.neurons.intercepts.lo; }));
  k.push_back(real_key(N, "intercept_max", "", "solve: upper intercept bound",
                       [](RunConfig& c) -> double& { return c.neurons.intercepts.hi; }));
  k.push_back(real_key(N, "reg", "fraction of max rate", "solve: decoder regularization",
                       [](RunConfig& c) -> double& { return c.neurons.reg; }));
  k.push_back(int_key(N, "n_eval_points", "", "solve: evaluation points",
                      [](RunConfig& c) -> int& { return c.neurons.n_eval_points; }));
  k.push_back({N, "function", "one of identity, square, cube, abs, sine", "",
               "solve: decoded function of x in [-1, 1]",
               [](const RunConfig& c) { return c.neurons.function; },
               [](RunConfig& c, const std::string& v) {
                 static const std::set<std::string> ok{"identity", "square", "cube", "abs", "sine"};
                 if (!ok.count(v)) throw BadValue{"one of identity, square, cube, abs, sine"};
                 c.neurons.function = v;
               }});
  k.push_back(int_key(N, "solve_points", "", "solve: rows in the output table",
                      [](RunConfig& c) -> int& { return c.neurons.solve_points; }));

  const std::string A = "arm";
  auto plant = [](RunConfig& c) -> ArmModel& { return c.arm.experiment.plant; };
  auto task = [](RunConfig& c) -> ReachTask& { return c.arm.experiment.task; };
  auto osc = [](RunConfig& c) -> OscConfig& { return c.arm.experiment.osc; };
  auto ad = [](RunConfig& c) -> AdaptiveConfig& { return c.arm.experiment.adaptive; };
  k.push_back(vec_key<3>(A, "link_lengths", "m", "link lengths",
                         [plant](RunConfig& c) -> std::array<double, 3>& { return plant(c).lengths; }));
  k.push_back(vec_key<3>(A, "link_masses", "kg", "link masses",
                         [plant](RunConfig& c) -> std::array<double, 3>& { return plant(c).masses; }));
  k.push_back(vec_key<3>(A, "link_inertias", "kg m^2", "link inertias about the centre of mass",
                         [plant](RunConfig& c) -> std::array<double, 3>& { return plant(c).inertias; }));
  k.push_back({A, "joint_limits", "list of 6 reals", "rad", "lower, upper limit per joint",
               [plant](const RunConfig& c) {
                 std::vector<std::string> items;
                 for (const Interval& l : plant(const_cast<RunConfig&>(c)).limits) {
                   items.push_back(format_double(l.lo));
                   items.push_back(format_double(l.hi));
                 }
                 return join(items);
               },
               [plant](RunConfig& c, const std::string& v) {
                 const std::vector<std::string> items = split_list(v);
                 if (items.size() != 6) throw BadValue{"list of 6 reals"};
                 for (std::size_t i = 0; i < 3; ++i) {
                   try {
                     plant(c).limits[i] = {to_real(items[2 * i]), to_real(items[2 * i + 1])};
                   } catch (const BadValue&) {
                     throw BadValue{"list of 6 reals"};
                   }
                 }
               }});
  k.push_back(real_key(A, "gravity", "m/s^2", "gravitational acceleration",
                       [plant](RunConfig& c) -> double& { return plant(c).gravity; }));
  k.push_back(real_key(A, "payload_mass", "kg", "unmodelled payload at the hand",
                       [plant](RunConfig& c) -> double& { return plant(c).payload_mass; }));
  k.push_back(vec_key<3>(A, "q0", "rad", "start pose of every reach",
                         [task](RunConfig& c) -> Eigen::Vector3d& { return task(c).q0; }));
  k.push_back(vec_key<2>(A, "target", "m", "hand target",
                         [task](RunConfig& c) -> Eigen::Vector2d& { return task(c).target; }));
  k.push_back(real_key(A, "duration", "s", "reach duration",
                       [task](RunConfig& c) -> double& { return task(c).duration; }));
  k.push_back(int_key(A, "n_reaches", "", "reaches per session",
                      [task](RunConfig& c) -> int& { return task(c).n_reaches; }));
  k.push_back(int_key(A, "n_sessions", "", "sessions",
                      [task](RunConfig& c) -> int& { return task(c).n_sessions; }));
  k.push_back(real_key(A, "path_tau", "s", "low-pass time constant of the reach path",
                       [task](RunConfig& c) -> double& { return task(c).path_tau; }));
  k.push_back(real_key(A, "kp", "1/s^2", "task-space position gain",
                       [osc](RunConfig& c) -> double& { return osc(c).kp; }));
  k.push_back(real_key(A, "kv", "1/s", "task-space velocity gain",
                       [osc](RunConfig& c) -> double& { return osc(c).kv; }));
  k.push_back(real_key(A, "ki", "1/s^3", "PID integral gain",
                       [osc](RunConfig& c) -> double& { return osc(c).ki; }));
  k.push_back(real_key(A, "integral_clamp", "m s", "PID integral magnitude limit per axis",
                       [osc](RunConfig& c) -> double& { return osc(c).integral_clamp; }));
  k.push_back(real_key(A, "sigma_min_ratio", "", "task inertia singular value floor relative to the largest",
                       [osc](RunConfig& c) -> double& { return osc(c).sigma_min_ratio; }));
  k.push_back(real_key(A, "null_kp", "1/s^2", "null-space posture gain",
                       [osc](RunConfig& c) -> double& { return osc(c).null_kp; }));
  k.push_back(real_key(A, "null_kv", "1/s", "null-space damping gain",
                       [osc](RunConfig& c) -> double& { return osc(c).null_kv; }));
  k.push_back(vec_key<3>(A, "posture", "rad", "null-space rest posture",
                         [osc](RunConfig& c) -> Eigen::Vector3d& { return osc(c).posture; }));
  k.push_back(int_key(A, "n_neurons", "", "adaptive ensemble size",
                      [ad](RunConfig& c) -> int& { return ad(c).n_neurons; }));
  k.push_back(real_key(A, "learning_rate", "", "PES learning rate kappa",
                       [ad](RunConfig& c) -> double& { return ad(c).learning_rate; }));
  k.push_back(real_key(A, "intercept_min", "", "adaptive ensemble lower intercept",
                       [ad](RunConfig& c) -> double& { return ad(c).intercepts.lo; }));
  k.push_back(real_key(A, "intercept_max", "", "adaptive ensemble upper intercept",
                       [ad](RunConfig& c) -> double& { return ad(c).intercepts.hi; }));
  k.push_back(real_key(A, "max_rate_min", "Hz", "adaptive ensemble lower max rate",
                       [ad](RunConfig& c) -> double& { return ad(c).max_rates.lo; }));
  k.push_back(real_key(A, "max_rate_max", "Hz", "adaptive ensemble upper max rate",
                       [ad](RunConfig& c) -> double& { return ad(c).max_rates.hi; }));
  k.push_back(real_key(A, "velocity_bound", "rad/s", "joint velocity normalization bound",
                       [ad](RunConfig& c) -> double& { return ad(c).velocity_bound; }));
  k.push_back(real_key(A, "adapt_synapse", "s", "adaptive output synapse",
                       [ad](RunConfig& c) -> double& { return ad(c).synapse; }));
  k.push_back(real_key(A, "u_adapt_ceiling", "N m", "reported bound on the adaptive torque",
                       [ad](RunConfig& c) -> double& { return ad(c).u_adapt_ceiling; }));
  k.push_back({A, "controllers", "list of PD_load, PID, adaptive_reference, adaptive_fixed", "",
               "controllers run after the PD_noload baseline",
               [](const RunConfig& c) {
                 std::vector<std::string> items;
                 for (ArmController a : c.arm.controllers) items.emplace_back(to_string(a));
                 return join(items);
               },
               [](RunConfig& c, const std::string& v) {
                 std::vector<ArmController> list;
                 for (const std::string& item : split_list(v)) {
                   const ArmController a = arm_controller_from_string(item);
                   if (a == ArmController::PDNoLoad) continue;
                   if (std::find(list.begin(), list.end(), a) == list.end()) list.push_back(a);
                 }
                 c.arm.controllers = list;
               }});
  k.push_back(bool_key(A, "trajectory", "write arm_traj.csv for the last adaptive reach",
                       [](RunConfig& c) -> bool& { return c.arm.write_trajectory; }));

  const std::string R = "rover";
  auto rp = [](RunConfig& c) -> RoverParams& { return c.rover.config.params; };
  auto rn = [](RunConfig& c) -> RoverNetConfig& { return c.rover.config.net; };
  auto rt = [](RunConfig& c) -> RoverTaskConfig& { return c.rover.config.task; };
  k.push_back(real_key(R, "wheelbase", "m", "axle distance L",
                       [rp](RunConfig& c) -> double& { return rp(c).wheelbase; }));
  k.push_back(real_key(R, "accel_gain", "m/s^2", "acceleration per unit command",
                       [rp](RunConfig& c) -> double& { return rp(c).accel_gain; }));
  k.push_back(real_key(R, "drag", "1/s", "linear drag",
                       [rp](RunConfig& c) -> double& { return rp(c).drag; }));
  k.push_back(real_key(R, "steer_rate", "1/s", "steering rate per unit command",
                       [rp](RunConfig& c) -> double& { return rp(c).steer_rate; }));
  k.push_back(real_key(R, "q_max", "rad", "steering angle limit",
                       [rp](RunConfig& c) -> double& { return rp(c).q_max; }));
  k.push_back(int_key(R, "n_neurons", "", "neurons per control ensemble",
                      [rn](RunConfig& c) -> int& { return rn(c).n_neurons; }));
  k.push_back(real_key(R, "max_rate_min", "Hz", "lower max rate",
                       [rn](RunConfig& c) -> double& { return rn(c).max_rates.lo; }));
  k.push_back(real_key(R, "max_rate_max", "Hz", "upper max rate",
                       [rn](RunConfig& c) -> double& { return rn(c).max_rates.hi; }));
  k.push_back(real_key(R, "k_a", "", "acceleration law gain",
                       [rn](RunConfig& c) -> double& { return rn(c).k_a; }));
  k.push_back(real_key(R, "k_p", "", "steering law gain",
                       [rn](RunConfig& c) -> double& { return rn(c).k_p; }));
  k.push_back(real_key(R, "target_radius", "m", "target distance represented by the ensembles",
                       [rn](RunConfig& c) -> double& { return rn(c).target_radius; }));
  k.push_back(real_key(R, "input_synapse", "s", "target input synapse",
                       [rn](RunConfig& c) -> double& { return rn(c).input_synapse; }));
  k.push_back(real_key(R, "q_synapse", "s", "steering-angle feedback synapse",
                       [rn](RunConfig& c) -> double& { return rn(c).q_synapse; }));
  k.push_back(real_key(R, "output_synapse", "s", "command output synapse",
                       [rn](RunConfig& c) -> double& { return rn(c).output_synapse; }));
  k.push_back(real_key(R, "exclusion_radius", "m", "targets closer than this are excluded from decoding",
                       [rn](RunConfig& c) -> double& { return rn(c).exclusion_radius; }));
  k.push_back(int_key(R, "n_targets", "", "targets per run",
                      [rt](RunConfig& c) -> int& { return rt(c).n_targets; }));
  k.push_back(real_key(R, "timeout", "s", "time allowed per target",
                       [rt](RunConfig& c) -> double& { return rt(c).timeout; }));
  k.push_back(real_key(R, "capture_radius", "m", "capture distance",
                       [rt](RunConfig& c) -> double& { return rt(c).capture_radius; }));
  k.push_back(real_key(R, "spawn_radius", "m", "targets spawn uniformly in this disk around the rover",
                       [rt](RunConfig& c) -> double& { return rt(c).spawn_radius; }));
  k.push_back(real_key(R, "noise_sigma", "m", "target observation noise",
                       [rt](RunConfig& c) -> double& { return rt(c).noise_sigma; }));
  k.push_back(int_key(R, "trajectory_stride", "steps", "rover_traj.csv row spacing",
                      [rt](RunConfig& c) -> int& { return rt(c).trajectory_stride; }));
  k.push_back(choice_key<RoverController>(
      R, "controller", "neural network or the exact laws",
      {{"neural", RoverController::Neural}, {"analytic", RoverController::Analytic}},
      [](RunConfig& c) -> RoverController& { return c.rover.controller; }));
  k.push_back(real_key(R, "bench_duration", "s", "bench: simulated time per measurement",
                       [](RunConfig& c) -> double& { return c.rover.bench_duration; }));

  const std::string C = "convert";
  auto cv = [](RunConfig& c) -> ConversionConfig& { return c.convert.conversion; };
  k.push_back(string_key(C, "net_file", "path", "dense net file; empty generates a random net",
                         [](RunConfig& c) -> std::string& { return c.convert.net_file; }));
  k.push_back({C, "layer_sizes", "list of positive integers", "", "random net layer sizes",
               [](const RunConfig& c) {
                 std::vector<std::string> items;
                 for (int n : c.convert.layer_sizes) items.push_back(std::to_string(n));
                 return join(items);
               },
               [](RunConfig& c, const std::string& v) {
                 std::vector<int> sizes;
                 for (const std::string& item : split_list(v)) {
                   long long n = 0;
                   try {
                     n = to_integer(item);
                   } catch (const BadValue&) {
                     throw BadValue{"list of positive integers"};
                   }
                   if (n <= 0 || n > 1000000) throw BadValue{"list of positive integers"};
                   sizes.push_back(static_cast<int>(n));
                 }
                 if (sizes.size() < 2) throw BadValue{"list of positive integers"};
                 c.convert.layer_sizes = sizes;
               }});
  k.push_back(real_key(C, "weight_scale", "", "random net weight scale (std * sqrt(fan_in))",
                       [](RunConfig& c) -> double& { return c.convert.weight_scale; }));
  k.push_back(real_key(C, "bias_scale", "", "random net bias standard deviation",
                       [](RunConfig& c) -> double& { return c.convert.bias_scale; }));
  k.push_back(int_key(C, "n_inputs", "", "random inputs presented",
                      [](RunConfig& c) -> int& { return c.convert.n_inputs; }));
  k.push_back(real_key(C, "scale_firing_rates", "", "input gain s, output decoder 1/s",
                       [cv](RunConfig& c) -> double& { return cv(c).scale_firing_rates; }));
  k.push_back(real_key(C, "output_synapse", "s", "output low-pass",
                       [cv](RunConfig& c) -> double& { return cv(c).output_synapse; }));
  k.push_back({C, "inter_layer_synapse", "real or none", "s", "synapse between layers",
               [cv](const RunConfig& c) {
                 const auto& s = cv(const_cast<RunConfig&>(c)).inter_layer_synapse;
                 return s ? format_double(*s) : std::string("none");
               },
               [cv](RunConfig& c, const std::string& v) {
                 if (v == "none") {
                   cv(c).inter_layer_synapse.reset();
                   return;
                 }
                 try {
                   cv(c).inter_layer_synapse = to_real(v);
                 } catch (const BadValue&) {
                   throw BadValue{"real or none"};
                 }
               }});
  k.push_back(choice_key<SpikingFlavor>(
      C, "flavor", "spiking units, quantized spiking units, or rate units",
      {{"spiking", SpikingFlavor::Spiking}, {"quantized", SpikingFlavor::SpikingQuantized},
       {"rate", SpikingFlavor::Rate}},
      [cv](RunConfig& c) -> SpikingFlavor& { return cv(c).flavor; }));
  k.push_back(real_key(C, "presentation_time", "s", "simulated time per input",
                       [cv](RunConfig& c) -> double& { return cv(c).presentation_time; }));
  return k;
}

const std::vector<KeyDef>& schema() {
  static const std::vector<KeyDef> keys = build_schema();
  return keys;
}

const std::vector<std::string>& sections() {
  static const std::vector<std::string> names{"global", "neurons", "arm", "rover", "convert"};
  return names;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::map<std::pair<std::string, std::string>, int> seen;
  std::string section = "global";
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::ParseError, where() + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(sections().begin(), sections().end(), section) == sections().end()) {
        throw Error(ErrorKind::UnknownKey, where() + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ParseError, where() + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = std::find_if(schema().begin(), schema().end(), [&](const KeyDef& d) {
      return d.section == section && d.name == key;
    });
    if (it == schema().end()) {
      throw Error(ErrorKind::UnknownKey, where() + "unknown key '" + key + "' in [" + section + "]");
    }
    const auto [prev, inserted] = seen.emplace(std::make_pair(section, key), line_no);
    if (!inserted) {
      throw Error(ErrorKind::DuplicateKey, where() + "key '" + key + "' in [" + section +
                                               "] already set on line " + std::to_string(prev->second));
    }
    try {
      it->set(config, value);
    } catch (const BadValue& bad) {
      throw Error(ErrorKind::TypeError,
                  where() + "key '" + key + "' expects " + bad.expected + ", got '" + value + "'");
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
  std::ostringstream out;
  for (const std::string& section : sections()) {
    if (section != "global") out << "\n[" << section << "]\n";
    for (const KeyDef& d : schema()) {
      if (d.section == section) out << d.name << " = " << d.get(config) << '\n';
    }
  }
  return out.str();
}

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream out;
  out << "Configuration keys (file format: [section] headers, key = value, # comments):\n";
  for (const std::string& section : sections()) {
    out << "\n[" << section << "]" << (section == "global" ? " (keys before any header)" : "") << '\n';
    for (const KeyDef& d : schema()) {
      if (d.section != section) continue;
      out << "  " << d.name << " = " << d.get(defaults);
      out << "  (" << d.type << (d.unit.empty() ? "" : ", " + d.unit) << ") " << d.help << '\n';
    }
  }
  return out.str();
}

QuantizationSpec quantization_spec(const RunConfig& config) {
  QuantizationSpec q = config.neurons.qspec;
  q.dt = config.dt;
  return q;
}

ArmExperimentConfig arm_config(const RunConfig& config) {
  ArmExperimentConfig c = config.arm.experiment;
  c.dt = config.dt;
  c.qspec = quantization_spec(config);
  return c;
}

RoverConfig rover_config(const RunConfig& config) {
  RoverConfig c = config.rover.config;
  c.dt = config.dt;
  c.qspec = quantization_spec(config);
  return c;
}

ConversionConfig conversion_config(const RunConfig& config) {
  ConversionConfig c = config.convert.conversion;
  c.dt = config.dt;
  c.qspec = quantization_spec(config);
  return c;
}

}  // namespace snnbot
