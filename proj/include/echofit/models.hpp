#pragma once

// Typed, unit-carrying front end to the model catalogue. Each function checks
// its domain and forwards to the corresponding kernel in catalog.hpp.

#include <cmath>
#include <cstddef>
#include <limits>

#include "echofit/catalog.hpp"
#include "echofit/error.hpp"
#include "echofit/units.hpp"

namespace echofit {

struct MimsParams {
  double i0 = 1.0;
  Duration phase_memory;
  double exponent = 1.0;
};

struct FieldModelParams {
  Frequency gamma0;
  Frequency alpha1;
  Frequency alpha2;
  double g1 = 0.0;
  double g2 = 0.0;
};

struct TempModelParams {
  Frequency gamma_floor;
  double amplitude = 0.0;  // kHz / K^n
  double exponent = 1.0;
};

struct ThreeLevelParams {
  double i0 = 1.0;
  Duration t1;
  Duration tz;
  double beta = 0.0;
};

struct SpectralDiffusionParams {
  Frequency gamma0;
  Frequency gamma_sd;
  Frequency rate_sd;
  Frequency gamma_tls;  // per decade of t23
  Duration t0;
};

// -- conversions to/from raw catalogue parameter vectors ---------------------

inline ModelParams to_model_params(const MimsParams& p) {
  return {ModelId::mims, {p.i0, p.phase_memory.ms(), p.exponent}};
}
inline ModelParams to_model_params(const FieldModelParams& p) {
  return {ModelId::field, {p.gamma0.khz(), p.alpha1.khz(), p.alpha2.khz(), p.g1, p.g2}};
}
inline ModelParams to_model_params(const TempModelParams& p) {
  return {ModelId::temperature, {p.gamma_floor.khz(), p.amplitude, p.exponent}};
}
inline ModelParams to_model_params(const SpectralDiffusionParams& p) {
  return {ModelId::spectral_diffusion,
          {p.gamma0.khz(), p.gamma_sd.khz(), p.rate_sd.khz(), p.gamma_tls.khz(), p.t0.ms()}};
}
inline ModelParams to_model_params(const ThreeLevelParams& p, const SpectralDiffusionParams& sd) {
  return {ModelId::stimulated_echo,
          {p.i0, p.t1.ms(), p.tz.ms(), p.beta, sd.gamma0.khz(), sd.gamma_sd.khz(), sd.rate_sd.khz(),
           sd.gamma_tls.khz(), sd.t0.ms()}};
}

inline MimsParams mims_params(const ModelParams& m) {
  if (m.model != ModelId::mims) throw std::invalid_argument("not a mims parameter set");
  return {m.values.at(0), Duration::milliseconds(m.values.at(1)), m.values.at(2)};
}
inline FieldModelParams field_params(const ModelParams& m) {
  if (m.model != ModelId::field) throw std::invalid_argument("not a field-model parameter set");
  return {Frequency::kilohertz(m.values.at(0)), Frequency::kilohertz(m.values.at(1)),
          Frequency::kilohertz(m.values.at(2)), m.values.at(3), m.values.at(4)};
}
inline TempModelParams temp_params(const ModelParams& m) {
  if (m.model != ModelId::temperature) throw std::invalid_argument("not a temperature-model parameter set");
  return {Frequency::kilohertz(m.values.at(0)), m.values.at(1), m.values.at(2)};
}
inline SpectralDiffusionParams sd_params(const ModelParams& m) {
  using E = StimulatedEchoModel;
  if (m.model == ModelId::spectral_diffusion)
    return {Frequency::kilohertz(m.values.at(0)), Frequency::kilohertz(m.values.at(1)),
            Frequency::kilohertz(m.values.at(2)), Frequency::kilohertz(m.values.at(3)),
            Duration::milliseconds(m.values.at(4))};
  if (m.model == ModelId::stimulated_echo)
    return {Frequency::kilohertz(m.values.at(E::gamma0)), Frequency::kilohertz(m.values.at(E::gamma_sd)),
            Frequency::kilohertz(m.values.at(E::rate_sd)), Frequency::kilohertz(m.values.at(E::gamma_tls)),
            Duration::milliseconds(m.values.at(E::t0))};
  throw std::invalid_argument("not a spectral-diffusion parameter set");
}
inline ThreeLevelParams three_level_params(const ModelParams& m) {
  using E = StimulatedEchoModel;
  if (m.model != ModelId::stimulated_echo) throw std::invalid_argument("not a stimulated-echo parameter set");
  return {m.values.at(E::i0), Duration::milliseconds(m.values.at(E::t1)), Duration::milliseconds(m.values.at(E::tz)),
          m.values.at(E::beta)};
}

// -- operations --------------------------------------------------------------

inline double mims_intensity(const MimsParams& p, Duration t12) {
  detail::require_domain(t12.ms() >= 0.0, "mims_intensity: t12 must be >= 0");
  detail::require_domain(p.phase_memory.ms() > 0.0, "mims_intensity: T_M must be > 0");
  return MimsModel::value({p.i0, p.phase_memory.ms(), p.exponent}, {t12.ms()});
}

/// Homogeneous linewidth (FWHM) 1 / (pi T_M).
inline Frequency gamma_eff_from_tm(Duration phase_memory) {
  detail::require_domain(phase_memory.ms() > 0.0, "gamma_eff_from_tm: T_M must be > 0");
  return Frequency::kilohertz(1.0 / (kPi * phase_memory.ms()));
}

/// Inverse of gamma_eff_from_tm.
inline Duration tm_from_gamma_eff(Frequency linewidth) {
  detail::require_domain(linewidth.khz() > 0.0, "tm_from_gamma_eff: linewidth must be > 0");
  return Duration::milliseconds(1.0 / (kPi * linewidth.khz()));
}

inline Frequency field_linewidth(const FieldModelParams& p, double field_T, double temperature_K) {
  detail::require_domain(temperature_K > 0.0, "field_linewidth: T must be > 0");
  detail::require_domain(field_T >= 0.0, "field_linewidth: B must be >= 0");
  return Frequency::kilohertz(FieldModel::value({p.gamma0.khz(), p.alpha1.khz(), p.alpha2.khz(), p.g1, p.g2}, {field_T, temperature_K}));
}

inline Frequency temp_linewidth(const TempModelParams& p, double temperature_K) {
  detail::require_domain(temperature_K > 0.0, "temp_linewidth: T must be > 0");
  return Frequency::kilohertz(TemperatureModel::value({p.gamma_floor.khz(), p.amplitude, p.exponent}, {temperature_K}));
}

inline Frequency sd_linewidth(const SpectralDiffusionParams& p, Duration t12, Duration t23) {
  detail::require_domain(t12.ms() >= 0.0, "sd_linewidth: t12 must be >= 0");
  detail::require_domain(t23.ms() >= 0.0, "sd_linewidth: t23 must be >= 0");
  if (p.gamma_tls.khz() != 0.0) {
    detail::require_domain(p.t0.ms() > 0.0, "sd_linewidth: t0 must be > 0");
    detail::require_domain(t23 >= p.t0, "sd_linewidth: t23 must be >= t0");
  }
  return Frequency::kilohertz(SpectralDiffusionModel::value(
      {p.gamma0.khz(), p.gamma_sd.khz(), p.rate_sd.khz(), p.gamma_tls.khz(), p.t0.ms()}, {t12.ms(), t23.ms()}));
}

inline Frequency sd_linewidth_t23(const SpectralDiffusionParams& p, Duration t23) {
  return sd_linewidth(p, Duration{}, t23);
}

inline double three_level_population_factor(const ThreeLevelParams& p, Duration t23) {
  detail::require_domain(t23.ms() >= 0.0, "three_level_population_factor: t23 must be >= 0");
  detail::require_domain(p.t1.ms() > 0.0 && p.tz.ms() > 0.0, "three_level_population_factor: T1 and T_Z must be > 0");
  return PopulationModel::value({p.beta, p.t1.ms(), p.tz.ms()}, {t23.ms()});
}

inline double stimulated_echo_intensity(const ThreeLevelParams& p, const SpectralDiffusionParams& sd, Duration t12,
                                        Duration t23) {
  // Validates both components.
  (void)three_level_population_factor(p, t23);
  (void)sd_linewidth(sd, t12, t23);
  return StimulatedEchoModel::value(
      {p.i0, p.t1.ms(), p.tz.ms(), p.beta, sd.gamma0.khz(), sd.gamma_sd.khz(), sd.rate_sd.khz(), sd.gamma_tls.khz(),
       sd.t0.ms()},
      {t12.ms(), t23.ms()});
}

inline Frequency sech2_sd_amplitude(Frequency gamma_max, double g, double field_T, double temperature_K) {
  detail::require_domain(temperature_K > 0.0, "sech2_sd_amplitude: T must be > 0");
  return Frequency::kilohertz(Sech2Model::value({gamma_max.khz(), g}, {field_T, temperature_K}));
}

// -- field minimum -------------------------------------------------------------

enum class MinimumLocation { interior, lower_boundary, upper_boundary };

struct FieldMinimum {
  double field_T = 0.0;
  Frequency linewidth;
  MinimumLocation location = MinimumLocation::interior;
  bool on_boundary() const { return location != MinimumLocation::interior; }
};

namespace detail {
// dGamma/dB and d2Gamma/dB2 of the field model.
inline void field_slope(const FieldModelParams& p, double c, double b, double& d1, double& d2) {
  const double k1 = p.g1 * c;
  const double k2 = p.g2 * c;
  const double e1 = clamped_exp(-k1 * b);
  const double e2 = clamped_exp(-k2 * b);
  d1 = -p.alpha1.khz() * k1 * e1 + p.alpha2.khz() * k2 * e2;
  d2 = p.alpha1.khz() * k1 * k1 * e1 - p.alpha2.khz() * k2 * k2 * e2;
}
}  // namespace detail

/// Global minimiser of field_linewidth on [0, B_max]: coarse grid, then a
/// safeguarded Newton/bisection refinement on dGamma/dB until
/// |dGamma/dB| < 1e-9 kHz/T.
inline FieldMinimum field_linewidth_minimum(const FieldModelParams& p, double temperature_K, double max_field_T,
                                            std::size_t grid_points = 4001) {
  detail::require_domain(temperature_K > 0.0, "field_linewidth_minimum: T must be > 0");
  detail::require_domain(max_field_T > 0.0, "field_linewidth_minimum: B_max must be > 0");
  grid_points = std::max<std::size_t>(grid_points, 2001);

  const double c = kMuBOverKB / temperature_K;
  const double step = max_field_T / static_cast<double>(grid_points - 1);
  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double v = field_linewidth(p, static_cast<double>(i) * step, temperature_K).khz();
    // Ties resolve to the larger field: past underflow the decaying term
    // leaves a flat plateau whose true minimiser is its right end.
    if (v <= best_value) {
      best_value = v;
      best = i;
    }
  }

  double lo = best == 0 ? 0.0 : static_cast<double>(best - 1) * step;
  double hi = best + 1 == grid_points ? max_field_T : static_cast<double>(best + 1) * step;
  double d1 = 0.0;
  double d2 = 0.0;

  detail::field_slope(p, c, lo, d1, d2);
  if (best == 0 && d1 >= 0.0)
    return {0.0, field_linewidth(p, 0.0, temperature_K), MinimumLocation::lower_boundary};
  detail::field_slope(p, c, hi, d1, d2);
  if (best + 1 == grid_points && d1 <= 0.0)
    return {max_field_T, field_linewidth(p, max_field_T, temperature_K), MinimumLocation::upper_boundary};

  // The bracket now has dGamma/dB < 0 at lo and > 0 at hi.
  double b = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    detail::field_slope(p, c, b, d1, d2);
    if (std::abs(d1) < 1e-9) break;
    if (d1 < 0.0)
      lo = b;
    else
      hi = b;
    double next = d2 > 0.0 ? b - d1 / d2 : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(hi, 1.0)) {
      b = next;
      break;
    }
    b = next;
  }
  return {b, field_linewidth(p, b, temperature_K), MinimumLocation::interior};
}

}  // namespace echofit
