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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/error.hpp"
#include "snnbot/neurons.hpp"

namespace snnbot {

using Id = std::string;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Ensemble {
  Id id;
  int n_neurons = 1;
  int dimensions = 1;
  double radius = 1.0;
  NeuronModel neuron_model = NeuronModel::LIF;
  NeuronParams params;
  Interval max_rate_range{200.0, 400.0};  // Hz
  Interval intercept_range{-1.0, 0.9};
  std::uint64_t seed = 0;
  // Optional overrides of the sampled tuning. Encoder rows are normalized
  // at build time; gain/bias bypass max-rate/intercept solving.
  std::optional<Eigen::MatrixXd> encoders;
  std::optional<GainBias> gain_bias;
  // 0 selects max(500, 2 * n_neurons).
  int n_eval_points = 0;
};

enum class NodeKind { ExternalInput, ExternalOutput, Passthrough };

struct NodeSpec {
  Id id;
  int dimensions = 1;
  NodeKind kind = NodeKind::Passthrough;
};

struct PESConfig {
  double learning_rate = 1e-2;  // kappa
  Id error_source;              // node supplying the error vector u
};

struct ConnectionSpec {
  Id id;
  Id source;
  Id target;
  std::string function = "identity";
  // target_dims x function_output_dims; an empty matrix means identity.
  Eigen::MatrixXd transform;
  // Low-pass time constant in seconds; absent means unfiltered.
  std::optional<double> synapse;
  std::optional<PESConfig> learning;
  // Explicit decoders (n_source_neurons x function_output_dims) instead of a
  // least-squares solve.
  std::optional<Eigen::MatrixXd> decoders;
};

enum class ProbeQuantity { DecodedOutput, SpikeRaster, FilteredActivity };

struct ProbeSpec {
  Id id;
  Id target;
  ProbeQuantity quantity = ProbeQuantity::DecodedOutput;
  std::optional<double> synapse;
  double sample_every = 0.001;
};

using VectorFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// A named connection function. `input_dims` / `output_dims` of -1 mean
/// "any" / "same as input". `domain`, when set, restricts the evaluation
/// points used to solve decoders for this function.
struct FunctionEntry {
  VectorFunction fn;
  int input_dims = -1;
  int output_dims = -1;
  std::function<bool(const Eigen::VectorXd&)> domain;
};

struct Diagnostic {
  ErrorKind kind;
  Id object;
  std::string message;
};

/// Declarative network description. Objects are stored keyed by id, so the
/// canonical form does not depend on insertion order.
class ModelGraph {
 public:
  explicit ModelGraph(double dt = 0.001);

  ModelGraph& add_ensemble(Ensemble ensemble);
  ModelGraph& add_node(NodeSpec node);
  ModelGraph& connect(ConnectionSpec spec);
  ModelGraph& add_probe(ProbeSpec probe);
  ModelGraph& register_function(const std::string& name, FunctionEntry entry);

  double dt() const { return dt_; }
  const std::map<Id, Ensemble>& ensembles() const { return ensembles_; }
  const std::map<Id, NodeSpec>& nodes() const { return nodes_; }
  const std::map<Id, ConnectionSpec>& connections() const { return connections_; }
  const std::map<Id, ProbeSpec>& probes() const { return probes_; }
  const std::map<std::string, FunctionEntry>& functions() const { return functions_; }

  const Ensemble* find_ensemble(const Id& id) const;
  const NodeSpec* find_node(const Id& id) const;
  /// Dimensionality of an ensemble or node; nullopt when the id is unknown.
  std::optional<int> endpoint_dims(const Id& id) const;
  /// Output dimensionality of `function` applied to a vector of `input_dims`.
  std::optional<int> function_output_dims(const std::string& function, int input_dims) const;

  /// Stable text rendering of every object, ordered by id.
  std::string canonical() const;

 private:
  bool id_in_use(const Id& id) const;

  double dt_;
  std::map<Id, Ensemble> ensembles_;
  std::map<Id, NodeSpec> nodes_;
  std::map<Id, ConnectionSpec> connections_;
  std::map<Id, ProbeSpec> probes_;
  std::map<std::string, FunctionEntry> functions_;
};

struct Validation;

/// An immutable graph that passed validation. Only validate_graph creates one.
class ValidatedGraph {
 public:
  const ModelGraph& graph() const { return *graph_; }
  const ModelGraph* operator->() const { return graph_.get(); }

 private:
  friend Validation validate_graph(const ModelGraph& graph);
  explicit ValidatedGraph(std::shared_ptr<const ModelGraph> graph) : graph_(std::move(graph)) {}
  std::shared_ptr<const ModelGraph> graph_;
};

struct Validation {
  std::vector<Diagnostic> diagnostics;
  std::optional<ValidatedGraph> graph;

  bool ok() const { return diagnostics.empty(); }
  /// Returns the validated graph or throws InvalidGraph listing every diagnostic.
  const ValidatedGraph& value() const;
};

Validation validate_graph(const ModelGraph& graph);

}  // namespace snnbot
