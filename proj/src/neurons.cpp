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

#include "snnbot/neurons.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "snnbot/error.hpp"

namespace snnbot {

std::string_view to_string(NeuronModel model) {
  switch (model) {
    case NeuronModel::LIF: return "LIF";
    case NeuronModel::SpikingRectifiedLinear: return "SpikingRectifiedLinear";
    case NeuronModel::RateLIF: return "RateLIF";
    case NeuronModel::RateRectifiedLinear: return "RateRectifiedLinear";
  }
  return "?";
}

NeuronModel neuron_model_from_string(std::string_view name) {
  for (auto m : {NeuronModel::LIF, NeuronModel::SpikingRectifiedLinear, NeuronModel::RateLIF,
                 NeuronModel::RateRectifiedLinear}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorKind::InvalidParam, "unknown neuron model '" + std::string(name) + "'");
}

void NeuronParams::validate() const {
  if (!(tau_rc > 0.0)) throw Error(ErrorKind::InvalidParam, "tau_rc must be > 0");
  if (!(tau_ref >= 0.0)) throw Error(ErrorKind::InvalidParam, "tau_ref must be >= 0");
  if (!(amplitude > 0.0)) throw Error(ErrorKind::InvalidParam, "amplitude must be > 0");
}

void QuantizationSpec::validate() const {
  if (weight_mantissa_bits < 2 || weight_mantissa_bits > 16) {
    throw Error(ErrorKind::InvalidParam, "weight_mantissa_bits must lie in [2, 16]");
  }
  if (state_bits < 8 || state_bits > 40) {
    throw Error(ErrorKind::InvalidParam, "state_bits must lie in [8, 40]");
  }
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidParam, "dt must be > 0");
}

double lif_rate(double current, const NeuronParams& params) {
  if (current <= 1.0) return 0.0;
  return 1.0 / (params.tau_ref + params.tau_rc * std::log1p(1.0 / (current - 1.0)));
}

double relu_rate(double current, const NeuronParams& params) {
  return params.amplitude * std::max(current, 0.0);
}

double rate(NeuronModel model, double current, const NeuronParams& params) {
  return is_lif_family(model) ? lif_rate(current, params) : relu_rate(current, params);
}

double rate_ceiling(NeuronModel model, const NeuronParams& params) {
  if (is_lif_family(model) && params.tau_ref > 0.0) return 1.0 / params.tau_ref;
  return std::numeric_limits<double>::infinity();
}

GainBias solve_gain_bias(std::span<const double> max_rates, std::span<const double> intercepts,
                         const NeuronParams& params, NeuronModel model) {
  if (max_rates.size() != intercepts.size()) {
    throw Error(ErrorKind::ShapeMismatch, "max_rates and intercepts differ in length");
  }
  params.validate();
  const auto n = static_cast<Eigen::Index>(max_rates.size());
  GainBias out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const double ceiling = rate_ceiling(model, params);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double max_rate = max_rates[static_cast<std::size_t>(i)];
    const double intercept = intercepts[static_cast<std::size_t>(i)];
    if (!(max_rate > 0.0)) throw Error(ErrorKind::InvalidParam, "max_rate must be > 0");
    if (!(intercept >= -1.0 && intercept < 1.0)) {
      throw Error(ErrorKind::InvalidParam, "intercept must lie in [-1, 1)");
    }
    if (max_rate >= ceiling) {
      throw Error(ErrorKind::InfeasibleTuning,
                  "max_rate " + std::to_string(max_rate) + " Hz is not below the rate ceiling " +
                      std::to_string(ceiling) + " Hz");
    }
    if (is_lif_family(model)) {
      // Invert 1 / (tau_ref + tau_rc * ln(J / (J - 1))) = max_rate.
      const double j_max =
          1.0 / -std::expm1((params.tau_ref - 1.0 / max_rate) / params.tau_rc);
      out.gain[i] = (j_max - 1.0) / (1.0 - intercept);
      out.bias[i] = 1.0 - out.gain[i] * intercept;
    } else {
      out.gain[i] = max_rate / (params.amplitude * (1.0 - intercept));
      out.bias[i] = -out.gain[i] * intercept;
    }
  }
  return out;
}

QuantizedMatrix quantize_weights(const Eigen::MatrixXd& weights, const QuantizationSpec& qspec) {
  qspec.validate();
  if (!weights.allFinite()) throw Error(ErrorKind::InvalidParam, "weights must be finite");
  const double max_abs = weights.size() == 0 ? 0.0 : weights.cwiseAbs().maxCoeff();
  if (max_abs == 0.0) return {weights, 0};

  const double max_mantissa = std::ldexp(1.0, qspec.weight_mantissa_bits - 1) - 1.0;
  int e = static_cast<int>(std::ceil(std::log2(max_abs / max_mantissa)));
  // log2 can be off by one ulp around exact powers of two; settle on the
  // smallest e with max_abs / 2^e <= max_mantissa.
  while (std::ldexp(max_abs, -e) > max_mantissa) ++e;
  while (std::ldexp(max_abs, -(e - 1)) <= max_mantissa) --e;

  QuantizedMatrix out{weights, e};
  out.values = weights.unaryExpr(
      [e](double w) { return std::ldexp(std::round(std::ldexp(w, -e)), e); });
  return out;
}

double quantize_current(double current, const QuantizationSpec& qspec) {
  const int frac_bits = qspec.weight_mantissa_bits - 1;
  return std::ldexp(std::round(std::ldexp(current, frac_bits)), -frac_bits);
}

void step_spiking(NeuronModel model, NeuronState& state, const Eigen::VectorXd& current, double dt,
                  const NeuronParams& params, Eigen::VectorXd& spikes) {
  const Eigen::Index n = current.size();
  spikes.resize(n);
  if (model == NeuronModel::SpikingRectifiedLinear) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double& v = state.voltage[i];
      v += dt * params.amplitude * std::max(current[i], 0.0);
      if (v >= 1.0) {
        v -= 1.0;
        spikes[i] = 1.0;
      } else {
        spikes[i] = 0.0;
      }
    }
    return;
  }
  if (model != NeuronModel::LIF) {
    throw Error(ErrorKind::InvalidParam, "step_spiking requires a spiking neuron model");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double& v = state.voltage[i];
    double& ref = state.refractory[i];
    const double j = current[i];
    ref -= dt;
    const double active = std::clamp(dt - ref, 0.0, dt);
    if (ref < 0.0) ref = 0.0;
    v += (j - v) * -std::expm1(-active / params.tau_rc);
    if (v < 0.0) v = 0.0;
    if (v > 1.0) {
      // Time elapsed since the threshold crossing, from the exact solution.
      const double since = -params.tau_rc * std::log1p(-(v - 1.0) / (j - 1.0));
      ref = params.tau_ref + dt - std::clamp(since, 0.0, active);
      v = 0.0;
      spikes[i] = 1.0;
    } else {
      spikes[i] = 0.0;
    }
  }
}

QuantizedNeuronKernel::QuantizedNeuronKernel(NeuronModel model, const NeuronParams& params,
                                             double dt, const QuantizationSpec& qspec)
    : model_(model), qspec_(qspec) {
  params.validate();
  qspec.validate();
  if (!is_spiking(model)) {
    throw Error(ErrorKind::InvalidParam, "quantized stepping requires a spiking neuron model");
  }
  threshold_ = std::int64_t{1} << (qspec.state_bits - 1);
  current_scale_ = std::llround(std::ldexp(1.0, qspec.state_bits - qspec.weight_mantissa_bits));
  tau_ref_units_ = std::llround(params.tau_ref / dt * static_cast<double>(kSubstepUnits));
  relu_increment_ = std::llround(std::ldexp(dt * params.amplitude, kReluBits));
  decay_.resize(kSubstepUnits + 1);
  for (std::int64_t u = 0; u <= kSubstepUnits; ++u) {
    const double active = dt * static_cast<double>(u) / static_cast<double>(kSubstepUnits);
    decay_[static_cast<std::size_t>(u)] =
        std::llround(std::ldexp(-std::expm1(-active / params.tau_rc), kDecayBits));
  }
}

void QuantizedNeuronKernel::step(QuantizedNeuronState& state, const Eigen::VectorXd& current,
                                 Eigen::VectorXd& spikes) const {
  const Eigen::Index n = current.size();
  spikes.resize(n);
  const int frac_bits = qspec_.weight_mantissa_bits - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const std::int64_t j_grid = std::llround(std::ldexp(current[i], frac_bits));
    const std::int64_t j_int = j_grid * current_scale_;
    std::int64_t& v = state.voltage[k];

    if (model_ == NeuronModel::SpikingRectifiedLinear) {
      if (j_int > 0) v += (j_int * relu_increment_ + (std::int64_t{1} << (kReluBits - 1))) >> kReluBits;
      if (v >= threshold_) {
        v -= threshold_;
        spikes[i] = 1.0;
      } else {
        spikes[i] = 0.0;
      }
      continue;
    }

    std::int64_t& ref = state.refractory[k];
    ref -= kSubstepUnits;
    const std::int64_t active = std::clamp<std::int64_t>(kSubstepUnits - ref, 0, kSubstepUnits);
    if (ref < 0) ref = 0;
    const std::int64_t v_prev = v;
    v += ((j_int - v) * decay_[static_cast<std::size_t>(active)] +
          (std::int64_t{1} << (kDecayBits - 1))) >> kDecayBits;
    if (v < 0) v = 0;
    if (v > threshold_) {
      // Linear interpolation of the crossing within the active window.
      const std::int64_t since = active * (v - threshold_) / std::max<std::int64_t>(v - v_prev, 1);
      ref = tau_ref_units_ + kSubstepUnits - since;
      v = 0;
      spikes[i] = 1.0;
    } else {
      spikes[i] = 0.0;
    }
  }
}

void step_spiking_quantized(NeuronModel model, QuantizedNeuronState& state,
                            const Eigen::VectorXd& current, double dt, const NeuronParams& params,
                            const QuantizationSpec& qspec, Eigen::VectorXd& spikes) {
  QuantizedNeuronKernel(model, params, dt, qspec).step(state, current, spikes);
}

}  // namespace snnbot
