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
#include <string>
#include <string_view>
#include <vector>

#include "snnbot/ann2snn.hpp"
#include "snnbot/arm.hpp"
#include "snnbot/nef_build.hpp"
#include "snnbot/neurons.hpp"
#include "snnbot/rover.hpp"

namespace snnbot {

/// Neuron sweeps (`tune`) and single-ensemble decoder solves (`solve`).
/// The quantization spec here applies to every module.
struct NeuronsSection {
  NeuronModel model = NeuronModel::LIF;
  NeuronParams params;
  QuantizationSpec qspec;
  double sweep_min = 0.0;       // input current, dimensionless
  double sweep_max = 10.0;
  double sweep_step = 0.01;
  double sweep_duration = 2.0;  // s simulated per current for the quantized rate
  int n_neurons = 100;
  Interval max_rates{200.0, 400.0};
  Interval intercepts{-1.0, 0.9};
  double reg = 0.1;
  int n_eval_points = 500;
  std::string function = "identity";
  int solve_points = 201;
};

struct ArmSection {
  ArmExperimentConfig experiment;
  std::vector<ArmController> controllers{ArmController::PD, ArmController::PID,
                                         ArmController::AdaptiveReference,
                                         ArmController::AdaptiveFixedPoint};
  bool write_trajectory = true;
};

struct RoverSection {
  RoverConfig config;
  RoverController controller = RoverController::Neural;
  double bench_duration = 1.0;  // simulated s per bench measurement
};

struct ConvertSection {
  ConversionConfig conversion;
  std::string net_file;  // empty: generate a random net
  std::vector<int> layer_sizes{8, 16, 2};
  double weight_scale = 1.0;
  double bias_scale = 0.1;
  int n_inputs = 50;
};

struct RunConfig {
  double dt = 0.001;
  std::uint64_t seed = 1;
  Backend backend = Backend::Reference;
  std::string out = "results";
  NeuronsSection neurons;
  ArmSection arm;
  RoverSection rover;
  ConvertSection convert;
};

/// Parses `[section]` headers, `key = value` pairs and `#` comments. Keys
/// before any header (or under `[global]`) are global. Missing keys keep
/// their defaults. Throws UnknownKey, TypeError or DuplicateKey with the
/// line number, or ParseError for malformed lines.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in parseable form.
std::string format_config(const RunConfig& config);

/// Every key with its type, default and unit.
std::string config_help();

/// Module configs with the global dt and quantization spec applied.
ArmExperimentConfig arm_config(const RunConfig& config);
RoverConfig rover_config(const RunConfig& config);
ConversionConfig conversion_config(const RunConfig& config);
QuantizationSpec quantization_spec(const RunConfig& config);

}  // namespace snnbot
