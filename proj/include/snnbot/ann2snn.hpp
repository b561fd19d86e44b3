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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snnbot/graph.hpp"
#include "snnbot/nef_build.hpp"

namespace snnbot {

enum class Activation { RectifiedLinear, LinearOutput };

/// Dense feedforward network. Layer l maps sizes[l] to sizes[l + 1] with
/// weights[l] (sizes[l + 1] x sizes[l]) and biases[l]; hidden layers are
/// rectified-linear and the final layer is linear.
struct DenseNetSpec {
  std::vector<int> sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int n_layers() const { return static_cast<int>(weights.size()); }
  Activation activation(int layer) const {
    return layer + 1 == n_layers() ? Activation::LinearOutput : Activation::RectifiedLinear;
  }
  /// Throws ShapeMismatch when the shape chain is inconsistent.
  void validate() const;
};

/// Random net with weights N(0, weight_scale^2 / fan_in) and biases
/// N(0, bias_scale^2).
DenseNetSpec random_dense_net(const std::vector<int>& sizes, double weight_scale,
                              double bias_scale, std::uint64_t seed);

/// Text format: `layers: n0 n1 ... nk`, then for each layer a `layer l`
/// line (0-based) followed by `W i j value` and `b i value` records.
/// Omitted entries are zero. `#` starts a comment.
DenseNetSpec parse_dense_net(const std::string& text);
DenseNetSpec load_dense_net(const std::filesystem::path& path);
std::string format_dense_net(const DenseNetSpec& net);

/// Standard dense forward pass with max(., 0) on hidden layers.
Eigen::VectorXd rate_forward(const DenseNetSpec& net, const Eigen::VectorXd& x);

// Rate swaps in non-spiking rectified-linear units: the large-s limit in
// which the converted network reproduces rate_forward exactly.
enum class SpikingFlavor { Spiking, SpikingQuantized, Rate };

struct ConversionConfig {
  double scale_firing_rates = 400.0;
  double output_synapse = 0.01;                // s
  std::optional<double> inter_layer_synapse;  // absent: unfiltered spikes
  SpikingFlavor flavor = SpikingFlavor::Spiking;
  double presentation_time = 0.5;  // s per input
  double dt = 0.001;
  QuantizationSpec qspec;

  void validate() const;
};

/// Graph ids used by the converted network.
inline constexpr const char* kAnnInput = "input";
inline constexpr const char* kAnnBias = "bias";
inline constexpr const char* kAnnOutput = "output";
std::string ann_layer_id(int layer);

/// One spiking rectified-linear ensemble per hidden layer with identity
/// encoders, gain s and bias s * b, decoded by 1/s. The input node feeds the
/// first layer directly; the final linear layer and its bias (from the
/// constant `bias` node) drive the low-passed `output` node.
ModelGraph convert(const DenseNetSpec& net, const ConversionConfig& config);

struct FidelityRow {
  int input_idx = 0;
  int dim = 0;
  double rate_out = 0.0;
  double spike_out = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;  // abs_err / output range
};

struct FidelityReport {
  std::vector<FidelityRow> rows;
  // Mean firing rate (Hz) per hidden layer over all inputs.
  std::vector<double> layer_mean_rates;
  double output_range = 0.0;  // max - min of all rate outputs
  double mean_abs_err = 0.0;
  /// mean_abs_err / output_range, or 0 when the range is 0.
  double normalized_error() const;
};

/// Simulates every input (rows of `inputs`) for the presentation time from a
/// fresh state and averages the output over the last half.
FidelityReport fidelity_report(const DenseNetSpec& net, const ConversionConfig& config,
                               const Eigen::MatrixXd& inputs);

/// Inputs uniform in [-1, 1]^n0.
Eigen::MatrixXd random_inputs(int count, int dims, std::uint64_t seed);

/// Writes `input_idx,dim,rate_out,spike_out,abs_err`.
void write_fidelity_csv(const std::filesystem::path& path, const FidelityReport& report);

}  // namespace snnbot
