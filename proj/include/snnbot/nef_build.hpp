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

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/graph.hpp"
#include "snnbot/neurons.hpp"
#include "snnbot/rng.hpp"

namespace snnbot {

enum class Backend { Reference, FixedPoint };

std::string_view to_string(Backend backend);
Backend backend_from_string(std::string_view name);

struct BuildConfig {
  double reg = 0.1;  // L2 regularization as a fraction of max activity
  QuantizationSpec qspec;
};

/// n x D matrix of unit-norm rows drawn uniformly from the sphere.
Eigen::MatrixXd sample_encoders(int n, int dimensions, Rng& rng);

/// n_points x D matrix of points uniform in the D-ball of `radius`.
Eigen::MatrixXd sample_eval_points(int n_points, int dimensions, double radius, Rng& rng);

struct CompiledEnsemble {
  Id id;
  NeuronModel model = NeuronModel::LIF;
  NeuronParams params;
  double radius = 1.0;
  Eigen::MatrixXd encoders;     // n x D, unit rows
  GainBias gain_bias;
  Eigen::MatrixXd eval_points;  // points x D, in represented units
  // Decoders for the identity function; filled for ensembles probed with
  // DecodedOutput.
  std::optional<Eigen::MatrixXd> identity_decoders;

  int n_neurons() const { return static_cast<int>(encoders.rows()); }
  int dimensions() const { return static_cast<int>(encoders.cols()); }
};

/// Firing rates (Hz) of `ensemble` at each evaluation point (rows).
Eigen::MatrixXd activity_matrix(const CompiledEnsemble& ensemble, const Eigen::MatrixXd& eval_points);

/// Regularized least squares via the normal equations
///   (A^T A + (reg * max(A))^2 * N * I) d = A^T Y,   N = rows of A.
/// Throws SingularSystem when reg == 0 and A^T A is not positive definite.
Eigen::MatrixXd solve_decoders(const Eigen::MatrixXd& activities, const Eigen::MatrixXd& targets,
                               double reg);

/// W = E_target * transform * decoders^T, or transform * decoders^T when the
/// target is not an ensemble.
Eigen::MatrixXd fold_weights(const Eigen::MatrixXd& decoders, const Eigen::MatrixXd& transform,
                             const Eigen::MatrixXd* target_encoders = nullptr);

enum class EndpointKind { Ensemble, Node };

struct EndpointRef {
  EndpointKind kind = EndpointKind::Node;
  std::size_t index = 0;
};

struct CompiledLearning {
  double learning_rate = 0.0;
  std::size_t error_node = 0;
};

struct CompiledConnection {
  Id id;
  EndpointRef source;
  EndpointRef target;
  std::string function;
  // Node sources evaluate the function directly; empty for identity.
  VectorFunction source_function;
  Eigen::MatrixXd transform;
  // Ensemble sources only: n_source x (function output dims), or
  // n_source x target dims for learned connections, which decode straight
  // into the target space (transform folded in, zero-initialized).
  Eigen::MatrixXd decoders;
  // The single lowered matrix applied to the (filtered) source signal.
  // Rows: target neurons for ensemble targets, target dims for nodes.
  Eigen::MatrixXd weights;
  std::optional<QuantizedMatrix> quantized;  // FixedPoint backend
  std::optional<double> synapse;
  double alpha = 0.0;  // exp(-dt / synapse), 0 when unfiltered
  std::optional<CompiledLearning> learning;
  // Rows of target encoders used to re-fold decoder updates; empty for
  // node targets.
  Eigen::MatrixXd target_encoders;

  int source_dims() const { return static_cast<int>(weights.cols()); }
};

struct CompiledNode {
  Id id;
  int dimensions = 1;
  NodeKind kind = NodeKind::Passthrough;
};

struct CompiledProbe {
  Id id;
  EndpointRef target;
  ProbeQuantity quantity = ProbeQuantity::DecodedOutput;
  std::optional<double> synapse;
  double alpha = 0.0;
  int sample_every_steps = 1;
};

struct CompiledModel {
  Backend backend = Backend::Reference;
  double dt = 0.001;
  QuantizationSpec qspec;
  std::vector<CompiledEnsemble> ensembles;
  std::vector<CompiledNode> nodes;
  std::vector<CompiledConnection> connections;
  std::vector<CompiledProbe> probes;
  // Nodes in an order where every node-to-node edge points forward.
  std::vector<std::size_t> node_order;

  std::optional<std::size_t> ensemble_index(const Id& id) const;
  std::optional<std::size_t> node_index(const Id& id) const;
  const CompiledConnection& connection(const Id& id) const;
};

/// Lowers a validated graph. Encoders, tuning and decoders depend only on the
/// graph (each ensemble draws from streams derived from its own seed), so
/// both backends share them bit for bit; FixedPoint additionally quantizes
/// every weight matrix.
CompiledModel compile(const ValidatedGraph& graph, Backend backend,
                      const BuildConfig& config = {});

}  // namespace snnbot
