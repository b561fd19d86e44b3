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

#include "snnbot/ann2snn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "snnbot/csv.hpp"
#include "snnbot/error.hpp"
#include "snnbot/rng.hpp"
#include "snnbot/simulator.hpp"

namespace snnbot {

void DenseNetSpec::validate() const {
  if (sizes.size() < 2) throw Error(ErrorKind::ShapeMismatch, "net needs at least one layer");
  for (const int n : sizes) {
    if (n <= 0) throw Error(ErrorKind::ShapeMismatch, "layer sizes must be positive");
  }
  if (weights.size() + 1 != sizes.size() || biases.size() + 1 != sizes.size()) {
    throw Error(ErrorKind::ShapeMismatch, "weights/biases do not match the layer count");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != sizes[l + 1] || weights[l].cols() != sizes[l] ||
        biases[l].size() != sizes[l + 1]) {
      throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(l) + " shape mismatch");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw Error(ErrorKind::InvalidParam, "layer " + std::to_string(l) + " has non-finite values");
    }
  }
}

DenseNetSpec random_dense_net(const std::vector<int>& sizes, double weight_scale, double bias_scale,
                              std::uint64_t seed) {
  DenseNetSpec net;
  net.sizes = sizes;
  Rng rng(seed, "ann/net");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double sd = weight_scale / std::sqrt(static_cast<double>(sizes[l]));
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.normal(0.0, sd);
    }
    Eigen::VectorXd b(sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal(0.0, bias_scale);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  net.validate();
  return net;
}

namespace {

[[noreturn]] void parse_fail(int line, const std::string& what) {
  throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + what);
}

long long parse_index(const std::string& tok, int line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(tok, &used);
  } catch (const std::exception&) {
    parse_fail(line, "expected an integer, got '" + tok + "'");
  }
  if (used != tok.size() || v < 0) parse_fail(line, "expected a non-negative integer, got '" + tok + "'");
  return v;
}

double parse_value(const std::string& tok, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    parse_fail(line, "expected a number, got '" + tok + "'");
  }
  if (used != tok.size() || !std::isfinite(v)) parse_fail(line, "expected a finite number, got '" + tok + "'");
  return v;
}

}  // namespace

DenseNetSpec parse_dense_net(const std::string& text) {
  DenseNetSpec net;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool have_header = false;
  int layer = -1;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    if (!have_header) {
      if (tok[0] != "layers:") parse_fail(line_no, "expected 'layers:' header");
      if (tok.size() < 3) parse_fail(line_no, "need at least two layer sizes");
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const long long n = parse_index(tok[i], line_no);
        if (n == 0) parse_fail(line_no, "layer sizes must be positive");
        net.sizes.push_back(static_cast<int>(n));
      }
      for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
        net.weights.push_back(Eigen::MatrixXd::Zero(net.sizes[l + 1], net.sizes[l]));
        net.biases.push_back(Eigen::VectorXd::Zero(net.sizes[l + 1]));
      }
      have_header = true;
      continue;
    }

    if (tok[0] == "layer") {
      if (tok.size() != 2) parse_fail(line_no, "expected 'layer <index>'");
      const long long l = parse_index(tok[1], line_no);
      if (l >= net.n_layers()) parse_fail(line_no, "layer index out of range");
      layer = static_cast<int>(l);
    } else if (tok[0] == "W") {
      if (tok.size() != 4) parse_fail(line_no, "expected 'W i j value'");
      if (layer < 0) parse_fail(line_no, "record before any 'layer' line");
      const long long i = parse_index(tok[1], line_no);
      const long long j = parse_index(tok[2], line_no);
      Eigen::MatrixXd& w = net.weights[static_cast<std::size_t>(layer)];
      if (i >= w.rows() || j >= w.cols()) parse_fail(line_no, "weight index out of range");
      w(i, j) = parse_value(tok[3], line_no);
    } else if (tok[0] == "b") {
      if (tok.size() != 3) parse_fail(line_no, "expected 'b i value'");
      if (layer < 0) parse_fail(line_no, "record before any 'layer' line");
      const long long i = parse_index(tok[1], line_no);
      Eigen::VectorXd& b = net.biases[static_cast<std::size_t>(layer)];
      if (i >= b.size()) parse_fail(line_no, "bias index out of range");
      b[i] = parse_value(tok[2], line_no);
    } else {
      parse_fail(line_no, "unknown record '" + tok[0] + "'");
    }
  }
  if (!have_header) parse_fail(line_no, "missing 'layers:' header");
  net.validate();
  return net;
}

DenseNetSpec load_dense_net(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dense_net(ss.str());
}

std::string format_dense_net(const DenseNetSpec& net) {
  net.validate();
  std::ostringstream out;
  out << "layers:";
  for (const int n : net.sizes) out << ' ' << n;
  out << '\n';
  for (int l = 0; l < net.n_layers(); ++l) {
    const auto k = static_cast<std::size_t>(l);
    out << "layer " << l << '\n';
    for (Eigen::Index i = 0; i < net.weights[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < net.weights[k].cols(); ++j) {
        out << "W " << i << ' ' << j << ' ' << format_double(net.weights[k](i, j)) << '\n';
      }
    }
    for (Eigen::Index i = 0; i < net.biases[k].size(); ++i) {
      out << "b " << i << ' ' << format_double(net.biases[k][i]) << '\n';
    }
  }
  return out.str();
}

Eigen::VectorXd rate_forward(const DenseNetSpec& net, const Eigen::VectorXd& x) {
  net.validate();
  if (x.size() != net.sizes.front()) {
    throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(x.size()) + " dims, net expects " +
                                              std::to_string(net.sizes.front()));
  }
  Eigen::VectorXd h = x;
  for (int l = 0; l < net.n_layers(); ++l) {
    const auto k = static_cast<std::size_t>(l);
    h = net.weights[k] * h + net.biases[k];
    if (net.activation(l) == Activation::RectifiedLinear) h = h.cwiseMax(0.0);
  }
  return h;
}

void ConversionConfig::validate() const {
  if (!(scale_firing_rates > 0.0) || !std::isfinite(scale_firing_rates)) {
    throw Error(ErrorKind::InvalidParam, "scale_firing_rates must be > 0");
  }
  if (!(output_synapse > 0.0)) throw Error(ErrorKind::InvalidParam, "output synapse must be > 0");
  if (inter_layer_synapse && !(*inter_layer_synapse > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "inter-layer synapse must be > 0 when set");
  }
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidParam, "dt must be > 0");
  if (!(presentation_time >= 10.0 * output_synapse)) {
    throw Error(ErrorKind::InvalidParam, "presentation time must be >= 10 output time constants");
  }
  qspec.validate();
}

std::string ann_layer_id(int layer) { return "layer" + std::to_string(layer); }

ModelGraph convert(const DenseNetSpec& net, const ConversionConfig& config) {
  net.validate();
  config.validate();
  const double s = config.scale_firing_rates;
  const int n_out = net.sizes.back();

  ModelGraph g(config.dt);
  g.add_node({kAnnInput, net.sizes.front(), NodeKind::ExternalInput});
  g.add_node({kAnnBias, 1, NodeKind::ExternalInput});
  g.add_node({kAnnOutput, n_out, NodeKind::ExternalOutput});

  Id previous = kAnnInput;
  for (int l = 0; l + 1 < net.n_layers(); ++l) {
    const auto k = static_cast<std::size_t>(l);
    const int n = net.sizes[k + 1];
    Ensemble ens;
    ens.id = ann_layer_id(l);
    ens.n_neurons = n;
    ens.dimensions = n;
    ens.neuron_model = config.flavor == SpikingFlavor::Rate ? NeuronModel::RateRectifiedLinear
                                                             : NeuronModel::SpikingRectifiedLinear;
    ens.encoders = Eigen::MatrixXd::Identity(n, n);
    ens.gain_bias = GainBias{Eigen::VectorXd::Constant(n, s), s * net.biases[k]};
    ens.n_eval_points = 1;
    g.add_ensemble(ens);

    ConnectionSpec c;
    c.id = previous + "_to_" + ens.id;
    c.source = previous;
    c.target = ens.id;
    c.transform = net.weights[k];
    c.synapse = config.inter_layer_synapse;
    if (previous != kAnnInput) {
      const int n_prev = net.sizes[k];
      c.decoders = Eigen::MatrixXd::Identity(n_prev, n_prev) / s;
    }
    g.connect(c);
    previous = ens.id;
  }

  const auto last = static_cast<std::size_t>(net.n_layers() - 1);
  ConnectionSpec out;
  out.id = previous + "_to_output";
  out.source = previous;
  out.target = kAnnOutput;
  out.transform = net.weights[last];
  out.synapse = config.output_synapse;
  if (previous != kAnnInput) {
    const int n_prev = net.sizes[last];
    out.decoders = Eigen::MatrixXd::Identity(n_prev, n_prev) / s;
  }
  g.connect(out);
  g.connect({.id = "bias_to_output", .source = kAnnBias, .target = kAnnOutput,
             .transform = Eigen::MatrixXd(net.biases[last]), .synapse = config.output_synapse});
  return g;
}

double FidelityReport::normalized_error() const {
  return output_range > 0.0 ? mean_abs_err / output_range : 0.0;
}

FidelityReport fidelity_report(const DenseNetSpec& net, const ConversionConfig& config,
                               const Eigen::MatrixXd& inputs) {
  if (inputs.rows() < 1) throw Error(ErrorKind::InvalidParam, "fidelity_report needs at least one input");
  if (inputs.cols() != net.sizes.front()) {
    throw Error(ErrorKind::ShapeMismatch, "inputs have " + std::to_string(inputs.cols()) +
                                              " columns, net expects " + std::to_string(net.sizes.front()));
  }
  const Backend backend =
      config.flavor == SpikingFlavor::SpikingQuantized ? Backend::FixedPoint : Backend::Reference;
  BuildConfig build;
  build.qspec = config.qspec;
  build.qspec.dt = config.dt;
  Simulator sim(compile(validate_graph(convert(net, config)).value(), backend, build));

  const int n_hidden = net.n_layers() - 1;
  const auto steps = static_cast<long long>(std::ceil(config.presentation_time / config.dt - 1e-9));
  const long long first_avg = steps - steps / 2;
  const int n_out = net.sizes.back();

  FidelityReport report;
  report.layer_mean_rates.assign(static_cast<std::size_t>(n_hidden), 0.0);
  std::vector<Eigen::VectorXd> rate_outs;
  std::vector<Eigen::VectorXd> spike_outs;
  StepInputs step_inputs;
  step_inputs[kAnnBias] = Eigen::VectorXd::Ones(1);

  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    sim.reset();
    step_inputs[kAnnInput] = inputs.row(r).transpose();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_out);
    std::vector<double> spikes(static_cast<std::size_t>(n_hidden), 0.0);
    for (long long k = 0; k < steps; ++k) {
      sim.step(step_inputs);
      if (k >= first_avg) acc += sim.node_value(kAnnOutput);
      for (int l = 0; l < n_hidden; ++l) {
        spikes[static_cast<std::size_t>(l)] += sim.activity(ann_layer_id(l)).sum() * config.dt;
      }
    }
    spike_outs.push_back(acc / static_cast<double>(steps - first_avg));
    rate_outs.push_back(rate_forward(net, inputs.row(r).transpose()));
    for (int l = 0; l < n_hidden; ++l) {
      const double n = net.sizes[static_cast<std::size_t>(l) + 1];
      report.layer_mean_rates[static_cast<std::size_t>(l)] +=
          spikes[static_cast<std::size_t>(l)] / (n * static_cast<double>(steps) * config.dt);
    }
  }
  for (double& rate : report.layer_mean_rates) rate /= static_cast<double>(inputs.rows());

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& y : rate_outs) {
    lo = std::min(lo, y.minCoeff());
    hi = std::max(hi, y.maxCoeff());
  }
  report.output_range = hi - lo;
  double total = 0.0;
  for (std::size_t r = 0; r < rate_outs.size(); ++r) {
    for (int d = 0; d < n_out; ++d) {
      FidelityRow row;
      row.input_idx = static_cast<int>(r);
      row.dim = d;
      row.rate_out = rate_outs[r][d];
      row.spike_out = spike_outs[r][d];
      row.abs_err = std::abs(row.spike_out - row.rate_out);
      row.rel_err = report.output_range > 0.0 ? row.abs_err / report.output_range : 0.0;
      total += row.abs_err;
      report.rows.push_back(row);
    }
  }
  report.mean_abs_err = total / static_cast<double>(report.rows.size());
  return report;
}

Eigen::MatrixXd random_inputs(int count, int dims, std::uint64_t seed) {
  Rng rng(seed, "ann/inputs");
  Eigen::MatrixXd x(count, dims);
  for (int r = 0; r < count; ++r) {
    for (int d = 0; d < dims; ++d) x(r, d) = rng.uniform(-1.0, 1.0);
  }
  return x;
}

void write_fidelity_csv(const std::filesystem::path& path, const FidelityReport& report) {
  CsvWriter csv(path, {"input_idx", "dim", "rate_out", "spike_out", "abs_err"});
  for (const FidelityRow& row : report.rows) {
    csv.row({static_cast<long long>(row.input_idx), static_cast<long long>(row.dim), row.rate_out,
             row.spike_out, row.abs_err});
  }
}

}  // namespace snnbot
