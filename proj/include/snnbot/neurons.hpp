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
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace snnbot {

enum class NeuronModel { LIF, SpikingRectifiedLinear, RateLIF, RateRectifiedLinear };

std::string_view to_string(NeuronModel model);
NeuronModel neuron_model_from_string(std::string_view name);

inline bool is_spiking(NeuronModel m) {
  return m == NeuronModel::LIF || m == NeuronModel::SpikingRectifiedLinear;
}
inline bool is_lif_family(NeuronModel m) {
  return m == NeuronModel::LIF || m == NeuronModel::RateLIF;
}

struct NeuronParams {
  double tau_rc = 0.02;    // s
  double tau_ref = 0.002;  // s
  double amplitude = 1.0;  // rectified-linear output scale

  void validate() const;
};

/// Fixed-point emulation settings. Bit widths are a stand-in for the
/// unpublished on-chip formats and are configuration-exposed.
struct QuantizationSpec {
  int weight_mantissa_bits = 8;
  int state_bits = 23;
  double dt = 0.001;

  void validate() const;
};

double lif_rate(double current, const NeuronParams& params);
double relu_rate(double current, const NeuronParams& params);
/// Steady-state rate (Hz) of the model, or its rate-model counterpart.
double rate(NeuronModel model, double current, const NeuronParams& params);
/// Supremum of the rate function: 1/tau_ref for the LIF family, +inf otherwise.
double rate_ceiling(NeuronModel model, const NeuronParams& params);

struct GainBias {
  Eigen::VectorXd gain;
  Eigen::VectorXd bias;
};

/// Gain and bias such that rate(gain * x + bias) is zero at x = intercept
/// and equals max_rate at x = 1. Throws InfeasibleTuning when max_rate is at
/// or above the model's rate ceiling.
GainBias solve_gain_bias(std::span<const double> max_rates, std::span<const double> intercepts,
                         const NeuronParams& params, NeuronModel model);

struct QuantizedMatrix {
  Eigen::MatrixXd values;
  int exponent = 0;
};

/// Shared power-of-two exponent quantization with a signed mantissa of
/// qspec.weight_mantissa_bits bits. An all-zero matrix is returned as is
/// with exponent 0.
QuantizedMatrix quantize_weights(const Eigen::MatrixXd& weights, const QuantizationSpec& qspec);

/// Rounds a current onto the fixed-point current grid (threshold / 2^(m-1)).
double quantize_current(double current, const QuantizationSpec& qspec);

// ---------------------------------------------------------------------------
// Spiking dynamics

struct NeuronState {
  Eigen::VectorXd voltage;
  Eigen::VectorXd refractory;  // s remaining, LIF only

  explicit NeuronState(Eigen::Index n = 0)
      : voltage(Eigen::VectorXd::Zero(n)), refractory(Eigen::VectorXd::Zero(n)) {}
};

/// Advances spiking neurons by one step; writes 0/1 into `spikes`.
///
/// LIF integrates the membrane exactly over the non-refractory part of the
/// step, clamps at 0 from below, and places the spike at the sub-step
/// threshold crossing so refractory time carries across step boundaries.
/// SpikingRectifiedLinear accumulates dt * amplitude * max(J, 0) and
/// subtracts 1 per spike.
void step_spiking(NeuronModel model, NeuronState& state, const Eigen::VectorXd& current, double dt,
                  const NeuronParams& params, Eigen::VectorXd& spikes);

struct QuantizedNeuronState {
  std::vector<std::int64_t> voltage;
  std::vector<std::int64_t> refractory;  // in 1/kSubstepUnits of a step

  explicit QuantizedNeuronState(std::size_t n = 0) : voltage(n, 0), refractory(n, 0) {}
};

/// Integer-state counterpart of step_spiking. Voltage is an integer with
/// threshold 2^(state_bits - 1); the leak factor and refractory timing are
/// precomputed integer tables, and currents are snapped to the fixed-point
/// current grid before integration, which produces the staircase rate curve.
class QuantizedNeuronKernel {
 public:
  static constexpr int kSubstepBits = 8;
  static constexpr std::int64_t kSubstepUnits = std::int64_t{1} << kSubstepBits;
  static constexpr int kDecayBits = 24;
  static constexpr int kReluBits = 32;

  QuantizedNeuronKernel(NeuronModel model, const NeuronParams& params, double dt,
                        const QuantizationSpec& qspec);

  void step(QuantizedNeuronState& state, const Eigen::VectorXd& current,
            Eigen::VectorXd& spikes) const;

  std::int64_t threshold() const { return threshold_; }

 private:
  NeuronModel model_;
  QuantizationSpec qspec_;
  std::int64_t threshold_;
  std::int64_t current_scale_;  // integer voltage units per grid step of current
  std::int64_t tau_ref_units_;
  std::int64_t relu_increment_;  // dt * amplitude in 2^-kReluBits units
  std::vector<std::int64_t> decay_;  // indexed by non-refractory substep units
};

void step_spiking_quantized(NeuronModel model, QuantizedNeuronState& state,
                            const Eigen::VectorXd& current, double dt, const NeuronParams& params,
                            const QuantizationSpec& qspec, Eigen::VectorXd& spikes);

}  // namespace snnbot
