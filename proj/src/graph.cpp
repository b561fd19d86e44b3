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

#include "snnbot/graph.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "snnbot/csv.hpp"

namespace snnbot {

namespace {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::ExternalInput: return "ExternalInput";
    case NodeKind::ExternalOutput: return "ExternalOutput";
    case NodeKind::Passthrough: return "Passthrough";
  }
  return "?";
}

std::string_view to_string(ProbeQuantity q) {
  switch (q) {
    case ProbeQuantity::DecodedOutput: return "DecodedOutput";
    case ProbeQuantity::SpikeRaster: return "SpikeRaster";
    case ProbeQuantity::FilteredActivity: return "FilteredActivity";
  }
  return "?";
}

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  os << '[' << m.rows() << 'x' << m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << ' ' << format_double(m(r, c));
  }
  os << ']';
}

void write_optional(std::ostream& os, const std::optional<double>& v) {
  if (v) {
    os << format_double(*v);
  } else {
    os << "none";
  }
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::UnknownEndpoint: return "UnknownEndpoint";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LearningOnNode: return "LearningOnNode";
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::InvalidGraph: return "InvalidGraph";
    case ErrorKind::InfeasibleTuning: return "InfeasibleTuning";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NonFiniteSignal: return "NonFiniteSignal";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::DivergedLearning: return "DivergedLearning";
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::UnknownKey: return "UnknownKey";
    case ErrorKind::TypeError: return "TypeError";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "?";
}

ModelGraph::ModelGraph(double dt) : dt_(dt) {
  register_function("identity", FunctionEntry{[](const Eigen::VectorXd& x) { return x; }});
}

bool ModelGraph::id_in_use(const Id& id) const {
  return ensembles_.count(id) || nodes_.count(id) || connections_.count(id) || probes_.count(id);
}

ModelGraph& ModelGraph::add_ensemble(Ensemble ensemble) {
  if (id_in_use(ensemble.id)) throw Error(ErrorKind::DuplicateId, "id '" + ensemble.id + "' in use");
  const Id id = ensemble.id;
  ensembles_.emplace(id, std::move(ensemble));
  return *this;
}

ModelGraph& ModelGraph::add_node(NodeSpec node) {
  if (id_in_use(node.id)) throw Error(ErrorKind::DuplicateId, "id '" + node.id + "' in use");
  const Id id = node.id;
  nodes_.emplace(id, std::move(node));
  return *this;
}

ModelGraph& ModelGraph::register_function(const std::string& name, FunctionEntry entry) {
  if (functions_.count(name)) throw Error(ErrorKind::DuplicateId, "function '" + name + "' exists");
  functions_.emplace(name, std::move(entry));
  return *this;
}

const Ensemble* ModelGraph::find_ensemble(const Id& id) const {
  const auto it = ensembles_.find(id);
  return it == ensembles_.end() ? nullptr : &it->second;
}

const NodeSpec* ModelGraph::find_node(const Id& id) const {
  const auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::optional<int> ModelGraph::endpoint_dims(const Id& id) const {
  if (const auto* e = find_ensemble(id)) return e->dimensions;
  if (const auto* n = find_node(id)) return n->dimensions;
  return std::nullopt;
}

std::optional<int> ModelGraph::function_output_dims(const std::string& function,
                                                    int input_dims) const {
  const auto it = functions_.find(function);
  if (it == functions_.end()) return std::nullopt;
  const FunctionEntry& f = it->second;
  if (f.input_dims >= 0 && f.input_dims != input_dims) return std::nullopt;
  return f.output_dims < 0 ? input_dims : f.output_dims;
}

ModelGraph& ModelGraph::connect(ConnectionSpec spec) {
  if (id_in_use(spec.id)) throw Error(ErrorKind::DuplicateId, "id '" + spec.id + "' in use");
  const auto src_dims = endpoint_dims(spec.source);
  if (!src_dims) throw Error(ErrorKind::UnknownEndpoint, "source '" + spec.source + "'");
  const auto dst_dims = endpoint_dims(spec.target);
  if (!dst_dims) throw Error(ErrorKind::UnknownEndpoint, "target '" + spec.target + "'");
  if (spec.learning && !find_ensemble(spec.source)) {
    throw Error(ErrorKind::LearningOnNode,
                "connection '" + spec.id + "' learns but its source is not an ensemble");
  }
  const auto fn_dims = function_output_dims(spec.function, *src_dims);
  if (!fn_dims) {
    throw Error(ErrorKind::ShapeMismatch, "function '" + spec.function +
                                              "' is unknown or does not accept " +
                                              std::to_string(*src_dims) + " dimensions");
  }
  if (spec.transform.size() == 0) {
    if (*fn_dims != *dst_dims) {
      throw Error(ErrorKind::ShapeMismatch, "identity transform from " + std::to_string(*fn_dims) +
                                                " to " + std::to_string(*dst_dims) + " dims");
    }
    spec.transform = Eigen::MatrixXd::Identity(*dst_dims, *fn_dims);
  } else if (spec.transform.rows() != *dst_dims || spec.transform.cols() != *fn_dims) {
    throw Error(ErrorKind::ShapeMismatch,
                "transform is " + std::to_string(spec.transform.rows()) + "x" +
                    std::to_string(spec.transform.cols()) + ", expected " +
                    std::to_string(*dst_dims) + "x" + std::to_string(*fn_dims));
  }
  const Id id = spec.id;
  connections_.emplace(id, std::move(spec));
  return *this;
}

ModelGraph& ModelGraph::add_probe(ProbeSpec probe) {
  if (id_in_use(probe.id)) throw Error(ErrorKind::DuplicateId, "id '" + probe.id + "' in use");
  const Id id = probe.id;
  probes_.emplace(id, std::move(probe));
  return *this;
}

std::string ModelGraph::canonical() const {
  std::ostringstream os;
  os << "dt " << format_double(dt_) << '\n';
  for (const auto& [id, e] : ensembles_) {
    os << "ensemble " << id << " n=" << e.n_neurons << " d=" << e.dimensions
       << " r=" << format_double(e.radius) << " model=" << to_string(e.neuron_model)
       << " tau_rc=" << format_double(e.params.tau_rc)
       << " tau_ref=" << format_double(e.params.tau_ref)
       << " amp=" << format_double(e.params.amplitude) << " rates=["
       << format_double(e.max_rate_range.lo) << ',' << format_double(e.max_rate_range.hi)
       << "] intercepts=[" << format_double(e.intercept_range.lo) << ','
       << format_double(e.intercept_range.hi) << "] seed=" << e.seed
       << " eval=" << e.n_eval_points;
    if (e.encoders) {
      os << " encoders=";
      write_matrix(os, *e.encoders);
    }
    if (e.gain_bias) {
      os << " gain=";
      write_matrix(os, e.gain_bias->gain);
      os << " bias=";
      write_matrix(os, e.gain_bias->bias);
    }
    os << '\n';
  }
  for (const auto& [id, n] : nodes_) {
    os << "node " << id << " d=" << n.dimensions << " kind=" << to_string(n.kind) << '\n';
  }
  for (const auto& [id, c] : connections_) {
    os << "connection " << id << ' ' << c.source << "->" << c.target << " fn=" << c.function
       << " synapse=";
    write_optional(os, c.synapse);
    os << " transform=";
    write_matrix(os, c.transform);
    if (c.learning) {
      os << " pes=" << format_double(c.learning->learning_rate) << '@'
         << c.learning->error_source;
    }
    if (c.decoders) {
      os << " decoders=";
      write_matrix(os, *c.decoders);
    }
    os << '\n';
  }
  for (const auto& [id, p] : probes_) {
    os << "probe " << id << " target=" << p.target << " q=" << to_string(p.quantity)
       << " synapse=";
    write_optional(os, p.synapse);
    os << " every=" << format_double(p.sample_every) << '\n';
  }
  return os.str();
}

const ValidatedGraph& Validation::value() const {
  if (!ok()) {
    std::string msg = std::to_string(diagnostics.size()) + " diagnostic(s):";
    for (const auto& d : diagnostics) {
      msg += "\n  [" + std::string(to_string(d.kind)) + "] " + d.object + ": " + d.message;
    }
    throw Error(ErrorKind::InvalidGraph, msg);
  }
  return *graph;
}

Validation validate_graph(const ModelGraph& graph) {
  Validation out;
  auto diag = [&](ErrorKind kind, const Id& id, std::string msg) {
    out.diagnostics.push_back({kind, id, std::move(msg)});
  };
  const double dt = graph.dt();
  if (!(dt > 0.0)) diag(ErrorKind::InvalidParam, "<graph>", "dt must be > 0");

  for (const auto& [id, e] : graph.ensembles()) {
    if (e.n_neurons < 1) diag(ErrorKind::InvalidParam, id, "n_neurons must be >= 1");
    if (e.dimensions < 1) diag(ErrorKind::InvalidParam, id, "dimensions must be >= 1");
    if (!(e.radius > 0.0)) diag(ErrorKind::InvalidParam, id, "radius must be > 0");
    try {
      e.params.validate();
    } catch (const Error& err) {
      diag(err.kind(), id, err.what());
    }
    if (e.gain_bias) {
      if (e.gain_bias->gain.size() != e.n_neurons || e.gain_bias->bias.size() != e.n_neurons) {
        diag(ErrorKind::ShapeMismatch, id, "gain/bias length differs from n_neurons");
      } else if (!(e.gain_bias->gain.array() > 0.0).all()) {
        diag(ErrorKind::InvalidParam, id, "gains must be > 0");
      }
    } else {
      const auto& ir = e.intercept_range;
      if (!(ir.lo >= -1.0 && ir.hi < 1.0 && ir.lo <= ir.hi)) {
        diag(ErrorKind::InvalidParam, id, "intercept_range must be a sub-interval of [-1, 1)");
      }
      const auto& mr = e.max_rate_range;
      const double ceiling = rate_ceiling(e.neuron_model, e.params);
      if (!(mr.lo > 0.0 && mr.hi < ceiling && mr.lo <= mr.hi)) {
        diag(ErrorKind::InvalidParam, id, "max_rate_range must lie within (0, rate ceiling)");
      }
    }
    if (e.encoders && (e.encoders->rows() != e.n_neurons || e.encoders->cols() != e.dimensions)) {
      diag(ErrorKind::ShapeMismatch, id, "encoders must be n_neurons x dimensions");
    }
    if (e.encoders && e.encoders->rowwise().norm().minCoeff() == 0.0) {
      diag(ErrorKind::InvalidParam, id, "encoder rows must be non-zero");
    }
    if (e.n_eval_points < 0) diag(ErrorKind::InvalidParam, id, "n_eval_points must be >= 0");
  }

  for (const auto& [id, n] : graph.nodes()) {
    if (n.dimensions < 1) diag(ErrorKind::InvalidParam, id, "dimensions must be >= 1");
  }

  // Node-to-node edges must form a DAG so node values resolve in one pass.
  std::map<Id, std::vector<Id>> node_edges;
  for (const auto& [id, c] : graph.connections()) {
    const auto src = graph.endpoint_dims(c.source);
    const auto dst = graph.endpoint_dims(c.target);
    if (!src) diag(ErrorKind::UnknownEndpoint, id, "source '" + c.source + "' does not exist");
    if (!dst) diag(ErrorKind::UnknownEndpoint, id, "target '" + c.target + "' does not exist");
    const NodeSpec* src_node = graph.find_node(c.source);
    const NodeSpec* dst_node = graph.find_node(c.target);
    if (dst_node && dst_node->kind == NodeKind::ExternalInput) {
      diag(ErrorKind::InvalidGraph, id, "ExternalInput node '" + c.target + "' has an inbound connection");
    }
    if (src_node && src_node->kind == NodeKind::ExternalOutput) {
      diag(ErrorKind::InvalidGraph, id, "ExternalOutput node '" + c.source + "' has an outbound connection");
    }
    if (src_node && dst_node) node_edges[c.source].push_back(c.target);
    if (c.synapse && !(*c.synapse > 0.0)) diag(ErrorKind::InvalidParam, id, "synapse must be > 0");
    std::optional<int> fn_dims;
    if (src) {
      fn_dims = graph.function_output_dims(c.function, *src);
      if (!fn_dims) {
        diag(ErrorKind::ShapeMismatch, id, "function '" + c.function + "' unusable on source");
      }
    }
    if (fn_dims && dst && (c.transform.rows() != *dst || c.transform.cols() != *fn_dims)) {
      diag(ErrorKind::ShapeMismatch, id, "transform shape inconsistent with endpoints");
    }
    const Ensemble* src_ens = graph.find_ensemble(c.source);
    if (c.decoders) {
      if (!src_ens) {
        diag(ErrorKind::InvalidGraph, id, "explicit decoders require an ensemble source");
      } else if (fn_dims && (c.decoders->rows() != src_ens->n_neurons ||
                             c.decoders->cols() != *fn_dims)) {
        diag(ErrorKind::ShapeMismatch, id, "decoders must be n_neurons x function_output_dims");
      }
    }
    if (c.learning) {
      if (!src_ens) diag(ErrorKind::LearningOnNode, id, "learning requires an ensemble source");
      if (!(c.learning->learning_rate > 0.0)) {
        diag(ErrorKind::InvalidParam, id, "learning_rate must be > 0");
      }
      const auto err_dims = graph.endpoint_dims(c.learning->error_source);
      if (!graph.find_node(c.learning->error_source)) {
        diag(ErrorKind::UnknownEndpoint, id,
             "error source '" + c.learning->error_source + "' is not a node");
      } else if (dst && *err_dims != *dst) {
        diag(ErrorKind::ShapeMismatch, id, "error dimensionality differs from connection output");
      }
    }
  }

  // Cycle detection over node-only edges (iterative DFS with colors).
  {
    std::map<Id, int> color;
    for (const auto& [start, _] : node_edges) {
      if (color[start] != 0) continue;
      std::vector<std::pair<Id, std::size_t>> stack{{start, 0}};
      color[start] = 1;
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& succ = node_edges[node];
        if (next < succ.size()) {
          const Id child = succ[next++];
          if (color[child] == 1) {
            diag(ErrorKind::InvalidGraph, child, "node-to-node connections form a cycle");
          } else if (color[child] == 0) {
            color[child] = 1;
            stack.emplace_back(child, 0);
          }
        } else {
          color[node] = 2;
          stack.pop_back();
        }
      }
    }
  }

  for (const auto& [id, p] : graph.probes()) {
    if (!graph.endpoint_dims(p.target)) {
      diag(ErrorKind::UnknownEndpoint, id, "target '" + p.target + "' does not exist");
    } else if (p.quantity != ProbeQuantity::DecodedOutput && !graph.find_ensemble(p.target)) {
      diag(ErrorKind::InvalidParam, id, "spike and activity probes require an ensemble target");
    }
    if (!(p.sample_every >= dt * (1.0 - 1e-9))) {
      diag(ErrorKind::InvalidParam, id, "sample_every must be >= dt");
    } else {
      const double steps = p.sample_every / dt;
      if (std::abs(steps - std::round(steps)) > 1e-6) {
        diag(ErrorKind::InvalidParam, id, "sample_every must be a multiple of dt");
      }
    }
    if (p.synapse && !(*p.synapse > 0.0)) diag(ErrorKind::InvalidParam, id, "synapse must be > 0");
  }

  if (out.diagnostics.empty()) {
    out.graph = ValidatedGraph(std::make_shared<const ModelGraph>(graph));
  }
  return out;
}

}  // namespace snnbot
