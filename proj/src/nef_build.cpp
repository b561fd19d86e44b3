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

#include "snnbot/nef_build.hpp"

#include <cmath>
#include <map>
#include <string>

#include "snnbot/error.hpp"

namespace snnbot {

std::string_view to_string(Backend backend) {
  return backend == Backend::Reference ? "reference" : "fixed";
}

Backend backend_from_string(std::string_view name) {
  if (name == "reference") return Backend::Reference;
  if (name == "fixed") return Backend::FixedPoint;
  throw Error(ErrorKind::InvalidParam, "unknown backend '" + std::string(name) + "'");
}

Eigen::MatrixXd sample_encoders(int n, int dimensions, Rng& rng) {
  if (n < 1 || dimensions < 1) throw Error(ErrorKind::InvalidParam, "n and D must be >= 1");
  Eigen::MatrixXd e(n, dimensions);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    while (norm == 0.0) {
      for (int d = 0; d < dimensions; ++d) e(i, d) = rng.normal();
      norm = e.row(i).norm();
    }
    e.row(i) /= norm;
  }
  return e;
}

Eigen::MatrixXd sample_eval_points(int n_points, int dimensions, double radius, Rng& rng) {
  if (n_points < 1 || dimensions < 1) {
    throw Error(ErrorKind::InvalidParam, "n_points and D must be >= 1");
  }
  Eigen::MatrixXd points = sample_encoders(n_points, dimensions, rng);
  for (int i = 0; i < n_points; ++i) {
    points.row(i) *= radius * std::pow(rng.uniform(), 1.0 / dimensions);
  }
  return points;
}

Eigen::MatrixXd activity_matrix(const CompiledEnsemble& ensemble,
                                const Eigen::MatrixXd& eval_points) {
  if (eval_points.cols() != ensemble.dimensions()) {
    throw Error(ErrorKind::ShapeMismatch, "eval points do not match ensemble dimensionality");
  }
  Eigen::MatrixXd currents = (eval_points * ensemble.encoders.transpose()) / ensemble.radius;
  const Eigen::VectorXd& gain = ensemble.gain_bias.gain;
  const Eigen::VectorXd& bias = ensemble.gain_bias.bias;
  for (Eigen::Index i = 0; i < currents.cols(); ++i) {
    for (Eigen::Index p = 0; p < currents.rows(); ++p) {
      currents(p, i) = rate(ensemble.model, gain[i] * currents(p, i) + bias[i], ensemble.params);
    }
  }
  return currents;
}

Eigen::MatrixXd solve_decoders(const Eigen::MatrixXd& activities, const Eigen::MatrixXd& targets,
                               double reg) {
  if (activities.rows() != targets.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "activities and targets differ in row count");
  }
  if (!(reg >= 0.0)) throw Error(ErrorKind::InvalidParam, "reg must be >= 0");
  const Eigen::Index n = activities.cols();
  const double sigma = reg * (activities.size() ? activities.maxCoeff() : 0.0);
  const double n_points = static_cast<double>(activities.rows());

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(activities.transpose());
  gram.diagonal().array() += sigma * sigma * n_points;
  const Eigen::MatrixXd rhs = activities.transpose() * targets;

  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(gram);
  if (llt.info() != Eigen::Success || (reg == 0.0 && llt.rcond() < 1e-13)) {
    throw Error(ErrorKind::SingularSystem,
                "normal equations are not positive definite (reg = " + std::to_string(reg) + ")");
  }
  return llt.solve(rhs);
}

Eigen::MatrixXd fold_weights(const Eigen::MatrixXd& decoders, const Eigen::MatrixXd& transform,
                             const Eigen::MatrixXd* target_encoders) {
  if (transform.cols() != decoders.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "transform columns differ from decoder columns");
  }
  if (target_encoders == nullptr) return transform * decoders.transpose();
  if (target_encoders->cols() != transform.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "target encoders do not match transform rows");
  }
  return *target_encoders * (transform * decoders.transpose());
}

std::optional<std::size_t> CompiledModel::ensemble_index(const Id& id) const {
  for (std::size_t i = 0; i < ensembles.size(); ++i) {
    if (ensembles[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> CompiledModel::node_index(const Id& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

const CompiledConnection& CompiledModel::connection(const Id& id) const {
  for (const auto& c : connections) {
    if (c.id == id) return c;
  }
  throw Error(ErrorKind::UnknownEndpoint, "no connection '" + id + "'");
}

namespace {

CompiledEnsemble build_ensemble(const Ensemble& spec) {
  CompiledEnsemble out;
  out.id = spec.id;
  out.model = spec.neuron_model;
  out.params = spec.params;
  out.radius = spec.radius;

  if (spec.encoders) {
    out.encoders = spec.encoders->rowwise().normalized();
  } else {
    Rng rng(spec.seed, "encoders");
    out.encoders = sample_encoders(spec.n_neurons, spec.dimensions, rng);
  }

  if (spec.gain_bias) {
    out.gain_bias = *spec.gain_bias;
  } else {
    Rng rng(spec.seed, "tuning");
    std::vector<double> max_rates(static_cast<std::size_t>(spec.n_neurons));
    std::vector<double> intercepts(max_rates.size());
    for (auto& r : max_rates) r = rng.uniform(spec.max_rate_range.lo, spec.max_rate_range.hi);
    for (auto& x : intercepts) x = rng.uniform(spec.intercept_range.lo, spec.intercept_range.hi);
    out.gain_bias = solve_gain_bias(max_rates, intercepts, spec.params, spec.neuron_model);
  }

  const int n_eval = spec.n_eval_points > 0 ? spec.n_eval_points : std::max(500, 2 * spec.n_neurons);
  Rng rng(spec.seed, "eval_points");
  out.eval_points = sample_eval_points(n_eval, spec.dimensions, spec.radius, rng);
  return out;
}

Eigen::MatrixXd solve_function_decoders(const CompiledEnsemble& ens, const FunctionEntry& fn,
                                        int output_dims, double reg) {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(ens.eval_points.rows()));
  for (Eigen::Index p = 0; p < ens.eval_points.rows(); ++p) {
    if (!fn.domain || fn.domain(ens.eval_points.row(p).transpose())) rows.push_back(p);
  }
  if (rows.empty()) throw Error(ErrorKind::InvalidParam, "function domain excludes every eval point");
  Eigen::MatrixXd points(static_cast<Eigen::Index>(rows.size()), ens.eval_points.cols());
  Eigen::MatrixXd targets(points.rows(), output_dims);
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    points.row(k) = ens.eval_points.row(rows[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd y = fn.fn(points.row(k).transpose());
    if (y.size() != output_dims) {
      throw Error(ErrorKind::ShapeMismatch, "function returned a vector of the wrong size");
    }
    targets.row(k) = y.transpose();
  }
  return solve_decoders(activity_matrix(ens, points), targets, reg);
}

}  // namespace

CompiledModel compile(const ValidatedGraph& validated, Backend backend, const BuildConfig& config) {
  const ModelGraph& graph = validated.graph();
  config.qspec.validate();

  CompiledModel model;
  model.backend = backend;
  model.dt = graph.dt();
  model.qspec = config.qspec;
  model.qspec.dt = graph.dt();

  std::map<Id, EndpointRef> refs;
  for (const auto& [id, spec] : graph.ensembles()) {
    refs[id] = {EndpointKind::Ensemble, model.ensembles.size()};
    model.ensembles.push_back(build_ensemble(spec));
  }
  for (const auto& [id, spec] : graph.nodes()) {
    refs[id] = {EndpointKind::Node, model.nodes.size()};
    model.nodes.push_back({id, spec.dimensions, spec.kind});
  }

  // Kahn's algorithm over node-to-node edges; ties resolved by index.
  {
    std::vector<int> indegree(model.nodes.size(), 0);
    std::vector<std::vector<std::size_t>> succ(model.nodes.size());
    for (const auto& [id, c] : graph.connections()) {
      const auto& s = refs.at(c.source);
      const auto& t = refs.at(c.target);
      if (s.kind == EndpointKind::Node && t.kind == EndpointKind::Node) {
        succ[s.index].push_back(t.index);
        ++indegree[t.index];
      }
    }
    std::vector<std::size_t> ready;
    for (std::size_t i = model.nodes.size(); i-- > 0;) {
      if (indegree[i] == 0) ready.push_back(i);
    }
    while (!ready.empty()) {
      const std::size_t i = ready.back();
      ready.pop_back();
      model.node_order.push_back(i);
      for (const std::size_t j : succ[i]) {
        if (--indegree[j] == 0) ready.push_back(j);
      }
    }
  }

  for (const auto& [id, spec] : graph.connections()) {
    CompiledConnection c;
    c.id = id;
    c.source = refs.at(spec.source);
    c.target = refs.at(spec.target);
    c.function = spec.function;
    c.transform = spec.transform;
    c.synapse = spec.synapse;
    c.alpha = spec.synapse ? std::exp(-model.dt / *spec.synapse) : 0.0;

    const Eigen::MatrixXd* target_encoders = nullptr;
    if (c.target.kind == EndpointKind::Ensemble) {
      c.target_encoders = model.ensembles[c.target.index].encoders;
      target_encoders = &c.target_encoders;
    }

    try {
      if (c.source.kind == EndpointKind::Ensemble) {
        const CompiledEnsemble& src = model.ensembles[c.source.index];
        if (spec.learning) {
          const Eigen::Index out_dims = spec.transform.rows();
          c.decoders = spec.decoders ? Eigen::MatrixXd(*spec.decoders * spec.transform.transpose())
                                     : Eigen::MatrixXd::Zero(src.n_neurons(), out_dims);
          c.transform = Eigen::MatrixXd::Identity(out_dims, out_dims);
          c.learning = CompiledLearning{spec.learning->learning_rate,
                                        refs.at(spec.learning->error_source).index};
        } else if (spec.decoders) {
          c.decoders = *spec.decoders;
        } else {
          const FunctionEntry& fn = graph.functions().at(spec.function);
          const int out_dims = *graph.function_output_dims(spec.function, src.dimensions());
          c.decoders = solve_function_decoders(src, fn, out_dims, config.reg);
        }
        c.weights = fold_weights(c.decoders, c.transform, target_encoders);
      } else {
        if (spec.function != "identity") c.source_function = graph.functions().at(spec.function).fn;
        c.weights = target_encoders ? Eigen::MatrixXd(*target_encoders * c.transform) : c.transform;
      }
    } catch (const Error& err) {
      throw Error(err.kind(), "connection '" + id + "': " + err.what());
    }

    if (backend == Backend::FixedPoint) c.quantized = quantize_weights(c.weights, model.qspec);
    model.connections.push_back(std::move(c));
  }

  for (const auto& [id, spec] : graph.probes()) {
    CompiledProbe p;
    p.id = id;
    p.target = refs.at(spec.target);
    p.quantity = spec.quantity;
    p.synapse = spec.synapse;
    if (!p.synapse && spec.quantity == ProbeQuantity::FilteredActivity) p.synapse = 0.02;
    p.alpha = p.synapse ? std::exp(-model.dt / *p.synapse) : 0.0;
    p.sample_every_steps = static_cast<int>(std::lround(spec.sample_every / model.dt));
    if (p.quantity == ProbeQuantity::DecodedOutput && p.target.kind == EndpointKind::Ensemble) {
      CompiledEnsemble& ens = model.ensembles[p.target.index];
      if (!ens.identity_decoders) {
        ens.identity_decoders = solve_decoders(activity_matrix(ens, ens.eval_points),
                                               ens.eval_points, config.reg);
      }
    }
    model.probes.push_back(std::move(p));
  }
  return model;
}

}  // namespace snnbot
