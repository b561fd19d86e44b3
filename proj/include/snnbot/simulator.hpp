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

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/nef_build.hpp"
#include "snnbot/neurons.hpp"

namespace snnbot {

/// Adaptive output u_adapt = a^T d.
Eigen::VectorXd adapt_signal(const Eigen::VectorXd& activities, const Eigen::MatrixXd& decoders);

/// One PES step: d -= (kappa * dt / n) * (a outer u), n = number of neurons.
void pes_update(Eigen::MatrixXd& decoders, const Eigen::VectorXd& activities,
                const Eigen::VectorXd& error, double learning_rate, double dt);

/// Decoder entries beyond this magnitude abort with DivergedLearning.
inline constexpr double kDivergenceLimit = 1e6;

struct ProbeTable {
  Id probe;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> samples;
};

using ProbeData = std::map<Id, ProbeTable>;
using StepInputs = std::map<Id, Eigen::VectorXd>;
using InputProvider = std::function<void(double t, StepInputs& inputs)>;

/// Writes probe data as `t,probe_id,dim,value`.
void write_probe_csv(const std::filesystem::path& path, const ProbeData& data);

/// Owns a compiled model and its simulation state. Each step:
///   inject inputs and resolve node values;
///   compute ensemble currents from the filtered presynaptic signals;
///   advance neurons (spikes are emitted with magnitude 1/dt);
///   update synaptic filters y <- alpha * y + (1 - alpha) * x;
///   apply PES updates;
///   populate outputs and probes.
class Simulator {
 public:
  explicit Simulator(CompiledModel model);

  /// Advances one dt. Every ExternalInput node must be present in `inputs`.
  void step(const StepInputs& inputs);

  /// Steps ceil(duration / dt) times, pulling inputs from `provider` (which
  /// may be empty when the model has no inputs). Returns all probe data
  /// recorded since construction or the last reset.
  const ProbeData& run(double duration, const InputProvider& provider = {});

  /// Clears neuron, filter and probe state and rewinds t to 0. Learned
  /// decoders are kept unless `reset_learning` is set.
  void reset(bool reset_learning = false);

  double time() const { return static_cast<double>(steps_) * model_.dt; }
  long long steps() const { return steps_; }
  const CompiledModel& model() const { return model_; }
  const ProbeData& probe_data() const { return probes_; }

  const Eigen::VectorXd& node_value(const Id& node) const;
  /// Latest activity (Hz) of an ensemble: spikes / dt for spiking models.
  const Eigen::VectorXd& activity(const Id& ensemble) const;
  /// Filtered source signal feeding a connection (the PES activity vector).
  const Eigen::VectorXd& connection_signal(const Id& connection) const;
  const Eigen::MatrixXd& decoders(const Id& connection) const;

 private:
  struct EnsembleRuntime {
    NeuronState state;
    QuantizedNeuronState qstate;
    std::optional<QuantizedNeuronKernel> kernel;
    Eigen::VectorXd input_scale;  // gain / radius
    Eigen::VectorXd current;
    Eigen::VectorXd spikes;
    Eigen::VectorXd activity;
    std::vector<std::size_t> incoming;
    std::vector<std::size_t> outgoing;
  };
  struct ConnectionRuntime {
    Eigen::VectorXd signal;  // filtered source signal
    Eigen::VectorXd output;
  };
  struct NodeRuntime {
    Eigen::VectorXd value;
    std::vector<std::size_t> incoming;
    std::vector<std::size_t> outgoing;
  };
  struct ProbeRuntime {
    Eigen::VectorXd filtered;
  };

  void propagate(std::size_t connection, const Eigen::VectorXd& source_signal);
  void apply_learning(std::size_t connection);
  Eigen::VectorXd probe_signal(const CompiledProbe& probe) const;
  std::size_t connection_index(const Id& id) const;

  CompiledModel model_;
  std::vector<Eigen::MatrixXd> initial_decoders_;
  std::vector<EnsembleRuntime> ensembles_;
  std::vector<ConnectionRuntime> connections_;
  std::vector<NodeRuntime> nodes_;
  std::vector<ProbeRuntime> probe_state_;
  ProbeData probes_;
  long long steps_ = 0;
};

}  // namespace snnbot
