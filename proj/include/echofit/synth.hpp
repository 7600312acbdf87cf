#pragma once

// Seeded synthetic traces and scan tables from any catalogued model.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echofit/catalog.hpp"
#include "echofit/data.hpp"
#include "echofit/error.hpp"
#include "echofit/fit.hpp"
#include "echofit/random.hpp"

namespace echofit {

enum class NoiseKind { none, multiplicative, additive };

struct Noise {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;

  static Noise none() { return {}; }
  static Noise multiplicative(double relative) { return {NoiseKind::multiplicative, relative}; }
  static Noise additive(double absolute) { return {NoiseKind::additive, absolute}; }
};

/// Sample points along the swept input, strictly increasing.
struct Grid {
  std::vector<double> points;

  static Grid explicit_points(std::vector<double> pts) {
    Grid g{std::move(pts)};
    g.validate();
    return g;
  }

  static Grid linear(double lo, double hi, std::size_t count) {
    if (count < 2 || !(hi > lo)) throw std::invalid_argument("grid: need count >= 2 and max > min");
    Grid g;
    for (std::size_t i = 0; i < count; ++i)
      g.points.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    g.points.back() = hi;
    return g;
  }

  static Grid logarithmic(double lo, double hi, std::size_t count) {
    if (count < 2 || !(hi > lo) || !(lo > 0.0)) throw std::invalid_argument("grid: need count >= 2 and 0 < min < max");
    Grid g;
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i)
      g.points.push_back(std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1)));
    g.points.front() = lo;
    g.points.back() = hi;
    return g;
  }

  void validate() const {
    if (points.empty()) throw std::invalid_argument("grid: no points");
    for (std::size_t i = 1; i < points.size(); ++i)
      if (!(points[i] > points[i - 1])) throw std::invalid_argument("grid: points must be strictly increasing");
  }
};

/// Damped-cosine envelope 1 + depth cos(2 pi f 2 t12) exp(-2 t12 / decay)
/// standing in for the super-hyperfine modulation of two-pulse echoes.
/// Defaults are placeholders, not measured values.
struct Modulation {
  double depth = 0.3;
  double frequency_mhz = 1.0;
  double decay_us = 0.5;

  double factor(double t12_ms) const {
    const double f_per_ms = frequency_mhz * 1e3;
    const double decay_ms = decay_us * 1e-3;
    return 1.0 + depth * std::cos(2.0 * kPi * f_per_ms * 2.0 * t12_ms) * std::exp(-2.0 * t12_ms / decay_ms);
  }
};

struct SynthSpec {
  ModelParams truth;
  Grid grid;
  std::size_t axis = 0;              // which model input the grid sweeps
  std::vector<double> fixed_inputs;  // full input vector; the axis entry is ignored
  Noise noise;
  std::uint64_t seed = 0;
  std::optional<Modulation> modulation;
  Condition condition{0.007, 0.0};   // recorded on traces

  void validate() const {
    const std::size_t n_in = input_count(truth.model);
    if (truth.values.size() != param_count(truth.model)) throw std::invalid_argument("synth: wrong number of parameters");
    if (axis >= n_in) throw std::invalid_argument("synth: axis out of range");
    if (!fixed_inputs.empty() && fixed_inputs.size() != n_in)
      throw std::invalid_argument("synth: fixed_inputs must cover every model input");
    if (n_in > 1 && fixed_inputs.empty()) throw std::invalid_argument("synth: fixed_inputs required for this model");
    grid.validate();
    if (noise.sigma < 0.0) throw std::invalid_argument("synth: noise sigma must be >= 0");
    if (modulation) {
      if (truth.model != ModelId::mims) throw std::invalid_argument("synth: modulation applies to 2PPE (mims) traces only");
      if (modulation->depth < 0.0 || modulation->depth > 1.0) throw std::invalid_argument("synth: depth must be in [0, 1]");
    }
  }
};

/// Model values on the grid, then the modulation envelope, then seeded noise.
inline Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset d;
  std::vector<double> in = spec.fixed_inputs;
  if (in.empty()) in.assign(input_count(spec.truth.model), 0.0);
  for (double x : spec.grid.points) {
    in[spec.axis] = x;
    double y = model_value(spec.truth.model, spec.truth.values, in);
    if (spec.modulation) y *= spec.modulation->factor(x);
    switch (spec.noise.kind) {
      case NoiseKind::none: break;
      case NoiseKind::multiplicative: y *= 1.0 + spec.noise.sigma * rng.normal(); break;
      case NoiseKind::additive: y += spec.noise.sigma * rng.normal(); break;
    }
    d.inputs.push_back(in);
    d.values.push_back(y);
  }
  return d;
}

/// Synthetic echo trace from the mims (2PPE) or stimulated-echo (3PPE) model.
inline EchoTrace synth_trace(const SynthSpec& spec) {
  EchoTrace t;
  switch (spec.truth.model) {
    case ModelId::mims: t.sequence = Sequence::two_pulse; break;
    case ModelId::stimulated_echo:
      if (spec.fixed_inputs.size() != 2) throw std::invalid_argument("synth: fixed_inputs required for this model");
      t.sequence = spec.axis == 1 ? Sequence::three_pulse_vs_t23 : Sequence::three_pulse_vs_t12;
      t.fixed_delay_ms = spec.fixed_inputs[spec.axis == 1 ? 0 : 1];
      break;
    default: throw std::invalid_argument("synth_trace: model " + std::string(to_string(spec.truth.model)) +
                                         " does not produce echo intensities");
  }
  const Dataset d = synth_dataset(spec);
  t.times_ms = spec.grid.points;
  t.intensity = d.values;
  t.condition = spec.condition;
  t.seed = spec.seed;
  t.truth = spec.truth;
  t.provenance = "synth seed " + std::to_string(spec.seed);
  return t;
}

/// Synthetic linewidth table versus field or temperature from the field,
/// temperature or sech2 models. For two-input models the grid sweeps
/// `axis` (0 = B, 1 = T) and fixed_inputs supplies the other condition.
inline ScanTable synth_scan(const SynthSpec& spec) {
  ScanTable t;
  switch (spec.truth.model) {
    case ModelId::field:
      if (spec.axis != 0) throw std::invalid_argument("synth_scan: field model sweeps B");
      t.axis = ConditionAxis::field;
      t.quantity = Quantity::gamma_eff;
      break;
    case ModelId::temperature:
      t.axis = ConditionAxis::temperature;
      t.quantity = Quantity::gamma_eff;
      break;
    case ModelId::sech2:
      t.axis = spec.axis == 0 ? ConditionAxis::field : ConditionAxis::temperature;
      t.quantity = Quantity::gamma_sd;
      break;
    default: throw std::invalid_argument("synth_scan: model " + std::string(to_string(spec.truth.model)) +
                                         " is not a linewidth-versus-condition model");
  }
  const Dataset d = synth_dataset(spec);
  if (t.axis == ConditionAxis::field)
    t.fixed_condition = spec.fixed_inputs.empty() ? spec.condition.temperature_K : spec.fixed_inputs[1];
  else
    t.fixed_condition = spec.truth.model == ModelId::sech2 ? spec.fixed_inputs[0] : spec.condition.field_T;
  for (std::size_t i = 0; i < d.size(); ++i) t.rows.push_back({spec.grid.points[i], d.values[i], 0.0, std::string(kFlagOk)});
  return t;
}

}  // namespace echofit
