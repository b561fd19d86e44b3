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

#include "snnbot/simulator.hpp"

#include <cmath>
#include <string>

#include "snnbot/csv.hpp"
#include "snnbot/error.hpp"

namespace snnbot {

Eigen::VectorXd adapt_signal(const Eigen::VectorXd& activities, const Eigen::MatrixXd& decoders) {
  if (activities.size() != decoders.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "activity length differs from decoder rows");
  }
  return decoders.transpose() * activities;
}

void pes_update(Eigen::MatrixXd& decoders, const Eigen::VectorXd& activities,
                const Eigen::VectorXd& error, double learning_rate, double dt) {
  if (activities.size() != decoders.rows() || error.size() != decoders.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "PES operands do not match decoder shape");
  }
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidParam, "learning rate must be > 0");
  const double scale = learning_rate * dt / static_cast<double>(decoders.rows());
  decoders.noalias() -= scale * activities * error.transpose();
}

void write_probe_csv(const std::filesystem::path& path, const ProbeData& data) {
  CsvWriter csv(path, {"t", "probe_id", "dim", "value"});
  for (const auto& [id, table] : data) {
    for (std::size_t k = 0; k < table.times.size(); ++k) {
      const Eigen::VectorXd& v = table.samples[k];
      for (Eigen::Index d = 0; d < v.size(); ++d) {
        csv.row({table.times[k], id, static_cast<long long>(d), v[d]});
      }
    }
  }
}

Simulator::Simulator(CompiledModel model) : model_(std::move(model)) {
  for (const auto& c : model_.connections) initial_decoders_.push_back(c.decoders);

  ensembles_.resize(model_.ensembles.size());
  for (std::size_t i = 0; i < model_.ensembles.size(); ++i) {
    const CompiledEnsemble& ens = model_.ensembles[i];
    EnsembleRuntime& rt = ensembles_[i];
    rt.input_scale = ens.gain_bias.gain / ens.radius;
    if (model_.backend == Backend::FixedPoint && is_spiking(ens.model)) {
      rt.kernel.emplace(ens.model, ens.params, model_.dt, model_.qspec);
    }
  }
  nodes_.resize(model_.nodes.size());
  connections_.resize(model_.connections.size());
  for (std::size_t c = 0; c < model_.connections.size(); ++c) {
    const CompiledConnection& conn = model_.connections[c];
    if (conn.source.kind == EndpointKind::Ensemble) {
      ensembles_[conn.source.index].outgoing.push_back(c);
    } else {
      nodes_[conn.source.index].outgoing.push_back(c);
    }
    if (conn.target.kind == EndpointKind::Ensemble) {
      ensembles_[conn.target.index].incoming.push_back(c);
    } else {
      nodes_[conn.target.index].incoming.push_back(c);
    }
  }
  probe_state_.resize(model_.probes.size());
  reset(false);
}

void Simulator::reset(bool reset_learning) {
  steps_ = 0;
  for (std::size_t i = 0; i < ensembles_.size(); ++i) {
    const auto n = model_.ensembles[i].n_neurons();
    EnsembleRuntime& rt = ensembles_[i];
    rt.state = NeuronState(n);
    rt.qstate = QuantizedNeuronState(static_cast<std::size_t>(n));
    rt.current = Eigen::VectorXd::Zero(n);
    rt.spikes = Eigen::VectorXd::Zero(n);
    rt.activity = Eigen::VectorXd::Zero(n);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    nodes_[i].value = Eigen::VectorXd::Zero(model_.nodes[i].dimensions);
  }
  for (std::size_t c = 0; c < connections_.size(); ++c) {
    CompiledConnection& conn = model_.connections[c];
    if (reset_learning && conn.learning) {
      conn.decoders = initial_decoders_[c];
      const Eigen::MatrixXd* enc = conn.target_encoders.size() ? &conn.target_encoders : nullptr;
      conn.weights = fold_weights(conn.decoders, conn.transform, enc);
      if (conn.quantized) conn.quantized = quantize_weights(conn.weights, model_.qspec);
    }
    connections_[c].signal = Eigen::VectorXd::Zero(conn.weights.cols());
    connections_[c].output = Eigen::VectorXd::Zero(conn.weights.rows());
  }
  probes_.clear();
  for (std::size_t p = 0; p < model_.probes.size(); ++p) {
    probes_[model_.probes[p].id].probe = model_.probes[p].id;
    probe_state_[p].filtered = Eigen::VectorXd();
  }
}

std::size_t Simulator::connection_index(const Id& id) const {
  for (std::size_t c = 0; c < model_.connections.size(); ++c) {
    if (model_.connections[c].id == id) return c;
  }
  throw Error(ErrorKind::UnknownEndpoint, "no connection '" + id + "'");
}

const Eigen::VectorXd& Simulator::node_value(const Id& node) const {
  const auto idx = model_.node_index(node);
  if (!idx) throw Error(ErrorKind::UnknownEndpoint, "no node '" + node + "'");
  return nodes_[*idx].value;
}

const Eigen::VectorXd& Simulator::activity(const Id& ensemble) const {
  const auto idx = model_.ensemble_index(ensemble);
  if (!idx) throw Error(ErrorKind::UnknownEndpoint, "no ensemble '" + ensemble + "'");
  return ensembles_[*idx].activity;
}

const Eigen::VectorXd& Simulator::connection_signal(const Id& connection) const {
  return connections_[connection_index(connection)].signal;
}

const Eigen::MatrixXd& Simulator::decoders(const Id& connection) const {
  return model_.connections[connection_index(connection)].decoders;
}

void Simulator::propagate(std::size_t c, const Eigen::VectorXd& source_signal) {
  const CompiledConnection& conn = model_.connections[c];
  ConnectionRuntime& rt = connections_[c];
  if (conn.synapse) {
    rt.signal = conn.alpha * rt.signal + (1.0 - conn.alpha) * source_signal;
  } else {
    rt.signal = source_signal;
  }
  const Eigen::MatrixXd& w = conn.quantized ? conn.quantized->values : conn.weights;
  rt.output.noalias() = w * rt.signal;
  if (!rt.output.allFinite()) {
    throw Error(ErrorKind::NonFiniteSignal, "connection '" + conn.id + "'");
  }
}

void Simulator::apply_learning(std::size_t c) {
  CompiledConnection& conn = model_.connections[c];
  const Eigen::VectorXd& error = nodes_[conn.learning->error_node].value;
  const Eigen::VectorXd& a = connections_[c].signal;
  const double scale = conn.learning->learning_rate * model_.dt / static_cast<double>(a.size());
  // Same update as pes_update, pushed through the fold so the runtime
  // weights track the decoders without refolding from scratch.
  const Eigen::MatrixXd delta = -scale * a * error.transpose();
  conn.decoders += delta;
  if (conn.target_encoders.size()) {
    conn.weights.noalias() += conn.target_encoders * delta.transpose();
  } else {
    conn.weights += delta.transpose();
  }
  if (!conn.decoders.allFinite() || conn.decoders.cwiseAbs().maxCoeff() > kDivergenceLimit) {
    throw Error(ErrorKind::DivergedLearning,
                "decoders of connection '" + conn.id + "' exceeded " + format_double(kDivergenceLimit));
  }
  if (conn.quantized) conn.quantized = quantize_weights(conn.weights, model_.qspec);
}

Eigen::VectorXd Simulator::probe_signal(const CompiledProbe& probe) const {
  if (probe.target.kind == EndpointKind::Node) return nodes_[probe.target.index].value;
  const EnsembleRuntime& rt = ensembles_[probe.target.index];
  switch (probe.quantity) {
    case ProbeQuantity::SpikeRaster: return rt.spikes;
    case ProbeQuantity::FilteredActivity: return rt.activity;
    case ProbeQuantity::DecodedOutput:
      return model_.ensembles[probe.target.index].identity_decoders->transpose() * rt.activity;
  }
  return {};
}

void Simulator::step(const StepInputs& inputs) {
  const double dt = model_.dt;

  // (0) Inputs and node values, in topological order.
  for (const std::size_t n : model_.node_order) {
    const CompiledNode& node = model_.nodes[n];
    NodeRuntime& rt = nodes_[n];
    if (node.kind == NodeKind::ExternalOutput) continue;
    if (node.kind == NodeKind::ExternalInput) {
      const auto it = inputs.find(node.id);
      if (it == inputs.end()) throw Error(ErrorKind::MissingInput, "node '" + node.id + "'");
      if (it->second.size() != node.dimensions) {
        throw Error(ErrorKind::ShapeMismatch, "input for node '" + node.id + "' has " +
                                                  std::to_string(it->second.size()) + " dims");
      }
      if (!it->second.allFinite()) {
        throw Error(ErrorKind::NonFiniteSignal, "input for node '" + node.id + "'");
      }
      rt.value = it->second;
    } else {
      rt.value.setZero();
      for (const std::size_t c : rt.incoming) rt.value += connections_[c].output;
    }
    for (const std::size_t c : rt.outgoing) {
      const CompiledConnection& conn = model_.connections[c];
      if (conn.source_function) {
        propagate(c, conn.source_function(rt.value));
      } else {
        propagate(c, rt.value);
      }
    }
  }

  // (1) currents, from signals filtered up to the previous step for
  // ensemble sources and up to this step for node sources.
  for (std::size_t e = 0; e < ensembles_.size(); ++e) {
    EnsembleRuntime& rt = ensembles_[e];
    rt.current = model_.ensembles[e].gain_bias.bias;
    for (const std::size_t c : rt.incoming) {
      rt.current.array() += rt.input_scale.array() * connections_[c].output.array();
    }
  }

  // (2) neuron update.
  for (std::size_t e = 0; e < ensembles_.size(); ++e) {
    const CompiledEnsemble& ens = model_.ensembles[e];
    EnsembleRuntime& rt = ensembles_[e];
    if (is_spiking(ens.model)) {
      if (rt.kernel) {
        rt.kernel->step(rt.qstate, rt.current, rt.spikes);
      } else {
        step_spiking(ens.model, rt.state, rt.current, dt, ens.params, rt.spikes);
      }
      rt.activity = rt.spikes / dt;
    } else {
      const bool quantized = model_.backend == Backend::FixedPoint;
      rt.activity.resize(rt.current.size());
      for (Eigen::Index i = 0; i < rt.current.size(); ++i) {
        const double j = quantized ? quantize_current(rt.current[i], model_.qspec) : rt.current[i];
        rt.activity[i] = rate(ens.model, j, ens.params);
      }
      rt.spikes = rt.activity * dt;
    }
  }

  // (3) synaptic filters on ensemble-sourced connections.
  for (std::size_t e = 0; e < ensembles_.size(); ++e) {
    for (const std::size_t c : ensembles_[e].outgoing) propagate(c, ensembles_[e].activity);
  }

  // (4) learning.
  for (std::size_t c = 0; c < model_.connections.size(); ++c) {
    if (model_.connections[c].learning) apply_learning(c);
  }

  // (5) outputs and probes.
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (model_.nodes[n].kind != NodeKind::ExternalOutput) continue;
    nodes_[n].value.setZero();
    for (const std::size_t c : nodes_[n].incoming) nodes_[n].value += connections_[c].output;
  }
  ++steps_;
  for (std::size_t p = 0; p < model_.probes.size(); ++p) {
    const CompiledProbe& probe = model_.probes[p];
    ProbeRuntime& rt = probe_state_[p];
    const Eigen::VectorXd x = probe_signal(probe);
    if (rt.filtered.size() != x.size()) rt.filtered = Eigen::VectorXd::Zero(x.size());
    if (probe.synapse) {
      rt.filtered = probe.alpha * rt.filtered + (1.0 - probe.alpha) * x;
    } else {
      rt.filtered = x;
    }
    if (steps_ % probe.sample_every_steps == 0) {
      ProbeTable& table = probes_[probe.id];
      table.times.push_back(time());
      table.samples.push_back(rt.filtered);
    }
  }
}

const ProbeData& Simulator::run(double duration, const InputProvider& provider) {
  if (!(duration >= 0.0)) throw Error(ErrorKind::InvalidParam, "duration must be >= 0");
  const auto n_steps = static_cast<long long>(std::ceil(duration / model_.dt - 1e-9));
  StepInputs inputs;
  for (long long k = 0; k < n_steps; ++k) {
    if (provider) provider(time(), inputs);
    try {
      step(inputs);
    } catch (const Error& err) {
      throw Error(err.kind(), std::string(err.what()) + " at t=" + format_double(time()));
    }
  }
  return probes_;
}

}  // namespace snnbot
