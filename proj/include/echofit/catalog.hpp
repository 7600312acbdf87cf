#pragma once

// Closed-form decay and linewidth models, evaluated on raw parameter arrays
// in base units (ms, kHz, K, T) together with analytic gradients.
//
// Every model type exposes:
//   kId, kParams, kInputs          compile-time shape
//   param_specs(), input_names()   names, units, default fit bounds
//   value(p, in)                   model value
//   gradient(p, in, grad)          value, plus d(value)/d(p[i]) into grad
//
// Domain checks live in the typed wrappers (models.hpp); these kernels assume
// valid inputs so the fitter can call them in its inner loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "echofit/error.hpp"
#include "echofit/random.hpp"
#include "echofit/units.hpp"

namespace echofit {

enum class ModelId {
  mims,
  field,
  temperature,
  spectral_diffusion,
  population,
  stimulated_echo,
  sech2,
};

inline constexpr std::array kAllModels = {
    ModelId::mims,       ModelId::field,           ModelId::temperature, ModelId::spectral_diffusion,
    ModelId::population, ModelId::stimulated_echo, ModelId::sech2,
};

inline std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::mims: return "mims";
    case ModelId::field: return "field";
    case ModelId::temperature: return "temperature";
    case ModelId::spectral_diffusion: return "spectral-diffusion";
    case ModelId::population: return "population";
    case ModelId::stimulated_echo: return "stimulated-echo";
    case ModelId::sech2: return "sech2";
  }
  return "?";
}

inline ModelId model_from_string(std::string_view name) {
  for (ModelId id : kAllModels)
    if (to_string(id) == name) return id;
  throw std::invalid_argument("unknown model id '" + std::string(name) + "'");
}

/// How a parameter is constrained during fitting.
enum class BoundKind {
  fixed,      // held at its initial value
  positive,   // strictly > 0, fitted as log(p)
  interval,   // lo < p < hi, fitted through a logistic map
  unbounded,
};

struct ParamBound {
  BoundKind kind = BoundKind::unbounded;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static constexpr ParamBound fixed() { return {BoundKind::fixed}; }
  static constexpr ParamBound positive() { return {BoundKind::positive, 0.0}; }
  static constexpr ParamBound between(double lo, double hi) { return {BoundKind::interval, lo, hi}; }

  constexpr bool contains(double v) const {
    switch (kind) {
      case BoundKind::positive: return v > 0.0;
      case BoundKind::interval: return v >= lo && v <= hi;
      default: return std::isfinite(v);
    }
  }
};

struct ParamSpec {
  std::string_view name;
  std::string_view unit;
  ParamBound bound;
};

namespace detail {

inline constexpr double kExpClamp = 700.0;

// exp() with its argument clamped to [-700, 700]. `slope` receives the
// derivative of the clamped argument with respect to the raw one (1 or 0).
inline double clamped_exp(double arg, double& slope) {
  if (arg > kExpClamp) {
    slope = 0.0;
    return std::exp(kExpClamp);
  }
  if (arg < -kExpClamp) {
    slope = 0.0;
    return std::exp(-kExpClamp);
  }
  slope = 1.0;
  return std::exp(arg);
}

inline double clamped_exp(double arg) {
  return std::exp(std::clamp(arg, -kExpClamp, kExpClamp));
}

// 1 - exp(arg) for arg <= 0, accurate for small |arg|.
inline double one_minus_exp(double arg, double& slope) {
  if (arg < -kExpClamp) {
    slope = 0.0;
    return -std::expm1(-kExpClamp);
  }
  slope = 1.0;
  return -std::expm1(arg);
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Two-pulse echo decay I0 * exp(-2 (2 t12 / T_M)^x).
/// params: I0, T_M [ms], x;  input: t12 [ms]
struct MimsModel {
  static constexpr ModelId kId = ModelId::mims;
  static constexpr std::size_t kParams = 3;
  static constexpr std::size_t kInputs = 1;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { i0, phase_memory, exponent };

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"I0", "1", ParamBound::positive()},
             {"T_M", "ms", ParamBound::positive()},
             {"x", "1", ParamBound::between(0.3, 4.0)}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"t12_ms"}; }

  static double value(const Params& p, const Input& in) {
    const double t = in[0];
    if (t == 0.0) return p[i0];
    const double s = std::pow(2.0 * t / p[phase_memory], p[exponent]);
    return p[i0] * detail::clamped_exp(-2.0 * s);
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    const double t = in[0];
    if (t == 0.0) {
      g = {1.0, 0.0, 0.0};
      return p[i0];
    }
    const double u = 2.0 * t / p[phase_memory];
    const double s = std::pow(u, p[exponent]);
    double slope = 0.0;
    const double e = detail::clamped_exp(-2.0 * s, slope);
    const double v = p[i0] * e;
    g[i0] = e;
    g[phase_memory] = slope * v * 2.0 * p[exponent] * s / p[phase_memory];
    g[exponent] = -slope * v * 2.0 * s * std::log(u);
    return v;
  }
};

/// Effective linewidth versus magnetic field:
///   gamma0 + alpha1 exp(-g1 c B) + alpha2 (1 - exp(-g2 c B)),  c = mu_B / (k_B T).
/// params: gamma0, alpha1, alpha2 [kHz], g1, g2;  input: B [T], T [K]
struct FieldModel {
  static constexpr ModelId kId = ModelId::field;
  static constexpr std::size_t kParams = 5;
  static constexpr std::size_t kInputs = 2;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { gamma0, alpha1, alpha2, g1, g2 };

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"gamma0", "kHz", ParamBound::positive()},
             {"alpha1", "kHz", ParamBound::positive()},
             {"alpha2", "kHz", ParamBound::positive()},
             {"g1", "1", ParamBound::positive()},
             {"g2", "1", ParamBound::positive()}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"B_T", "T_K"}; }

  static double value(const Params& p, const Input& in) {
    Params g{};
    return gradient(p, in, g);
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    const double cb = kMuBOverKB * in[0] / in[1];
    double s1 = 0.0;
    double s2 = 0.0;
    const double decay = detail::clamped_exp(-p[g1] * cb, s1);
    const double rise = detail::one_minus_exp(-p[g2] * cb, s2);
    g[gamma0] = 1.0;
    g[alpha1] = decay;
    g[alpha2] = rise;
    g[g1] = -s1 * p[alpha1] * cb * decay;
    g[g2] = s2 * p[alpha2] * cb * (1.0 - rise);
    return p[gamma0] + p[alpha1] * decay + p[alpha2] * rise;
  }
};

/// Saturating temperature power law floor + amplitude * T^n.
/// params: floor [kHz], amplitude [kHz/K^n], n;  input: T [K]
struct TemperatureModel {
  static constexpr ModelId kId = ModelId::temperature;
  static constexpr std::size_t kParams = 3;
  static constexpr std::size_t kInputs = 1;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { floor, amplitude, exponent };

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"gamma_floor", "kHz", ParamBound::positive()},
             {"amplitude", "kHz/K^n", ParamBound::positive()},
             {"n", "1", ParamBound::between(0.5, 3.0)}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"T_K"}; }

  static double value(const Params& p, const Input& in) {
    return p[floor] + p[amplitude] * std::pow(in[0], p[exponent]);
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    const double tn = std::pow(in[0], p[exponent]);
    g[floor] = 1.0;
    g[amplitude] = tn;
    g[exponent] = p[amplitude] * tn * std::log(in[0]);
    return p[floor] + p[amplitude] * tn;
  }
};

/// Time-dependent linewidth under spectral diffusion:
///   G0 + G_SD/2 [R t12 + (1 - exp(-R t23))] + G_TLS log10(t23 / t0).
/// params: G0, G_SD, R_SD [kHz], G_TLS [kHz/decade], t0 [ms];  input: t12, t23 [ms]
/// The TLS term is taken as zero when G_TLS == 0.
struct SpectralDiffusionModel {
  static constexpr ModelId kId = ModelId::spectral_diffusion;
  static constexpr std::size_t kParams = 5;
  static constexpr std::size_t kInputs = 2;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { gamma0, gamma_sd, rate_sd, gamma_tls, t0 };

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"Gamma0", "kHz", ParamBound::positive()},
             {"Gamma_SD", "kHz", ParamBound::positive()},
             {"R_SD", "kHz", ParamBound::positive()},
             {"Gamma_TLS", "kHz", ParamBound::positive()},
             {"t0", "ms", ParamBound::fixed()}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"t12_ms", "t23_ms"}; }

  static double value(const Params& p, const Input& in) {
    Params g{};
    return gradient(p, in, g);
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    const double t12 = in[0];
    const double t23 = in[1];
    double slope = 0.0;
    const double rise = detail::one_minus_exp(-p[rate_sd] * t23, slope);
    const double bracket = p[rate_sd] * t12 + rise;
    double tls = 0.0;
    double dlog = 0.0;
    if (t23 > 0.0) dlog = std::log10(t23 / p[t0]);
    if (p[gamma_tls] != 0.0) tls = p[gamma_tls] * dlog;
    g[gamma0] = 1.0;
    g[gamma_sd] = 0.5 * bracket;
    g[rate_sd] = 0.5 * p[gamma_sd] * (t12 + slope * t23 * (1.0 - rise));
    g[gamma_tls] = dlog;
    g[t0] = -p[gamma_tls] / (p[t0] * std::numbers::ln10);
    return p[gamma0] + 0.5 * p[gamma_sd] * bracket + tls;
  }
};

/// Three-level population factor
///   exp(-t/T1) + (beta/2) T_Z/(T_Z - T1) (exp(-t/T_Z) - exp(-t/T1)),
/// with the analytic limit used when |T_Z - T1| / T1 < 1e-9.
/// params: beta, T1 [ms], T_Z [ms];  input: t23 [ms]
struct PopulationModel {
  static constexpr ModelId kId = ModelId::population;
  static constexpr std::size_t kParams = 3;
  static constexpr std::size_t kInputs = 1;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { beta, t1, tz };

  static constexpr double kDegenerate = 1e-9;

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"beta", "1", ParamBound::between(0.0, 2.0)},
             {"T1", "ms", ParamBound::positive()},
             {"T_Z", "ms", ParamBound::positive()}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"t23_ms"}; }

  static double value(const Params& p, const Input& in) {
    Params g{};
    return gradient(p, in, g);
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    const double t = in[0];
    const double b = p[beta];
    const double T1 = p[t1];
    const double TZ = p[tz];
    double s1 = 0.0;
    const double e1 = detail::clamped_exp(-t / T1, s1);
    const double d = TZ - T1;

    if (std::abs(d) / T1 < kDegenerate) {
      // F = e1 (1 + (b/2) t/T1); partials taken from the two-variable
      // expansion around T_Z = T1.
      const double tt = t / T1;
      const double dz = s1 * 0.5 * b * e1 * tt * tt / (2.0 * T1);
      const double total = s1 * e1 * (t / (T1 * T1)) * (1.0 + 0.5 * b * tt) - 0.5 * b * e1 * t / (T1 * T1);
      g[beta] = 0.5 * tt * e1;
      g[tz] = dz;
      g[t1] = total - dz;
      return e1 * (1.0 + 0.5 * b * tt);
    }

    const double a = TZ / d;
    double sz = 0.0;
    const double ez = detail::clamped_exp(-t / TZ, sz);
    // ez - e1, computed as e1 * expm1(t (TZ - T1) / (T1 TZ)) where that is
    // accurate (close lifetimes), directly otherwise.
    const double delta = t * d / (T1 * TZ);
    const double diff = (std::abs(delta) < 1.0 && s1 == 1.0) ? e1 * std::expm1(delta) : ez - e1;

    const double de1 = s1 * e1 * t / (T1 * T1);
    const double dez = sz * ez * t / (TZ * TZ);
    g[beta] = 0.5 * a * diff;
    g[t1] = de1 + 0.5 * b * (TZ / (d * d) * diff - a * de1);
    g[tz] = 0.5 * b * (-T1 / (d * d) * diff + a * dez);
    return e1 + 0.5 * b * a * diff;
  }
};

/// Stimulated (three-pulse) echo intensity
///   I0 F(t23)^2 exp(-4 pi t12 Gamma_eff(t12, t23)),
/// F from PopulationModel and Gamma_eff from SpectralDiffusionModel.
/// params: I0, T1 [ms], T_Z [ms], beta, G0, G_SD, R_SD, G_TLS [kHz], t0 [ms]
/// input: t12, t23 [ms]
struct StimulatedEchoModel {
  static constexpr ModelId kId = ModelId::stimulated_echo;
  static constexpr std::size_t kParams = 9;
  static constexpr std::size_t kInputs = 2;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { i0, t1, tz, beta, gamma0, gamma_sd, rate_sd, gamma_tls, t0 };

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"I0", "1", ParamBound::positive()},
             {"T1", "ms", ParamBound::fixed()},
             {"T_Z", "ms", ParamBound::fixed()},
             {"beta", "1", ParamBound::between(0.0, 2.0)},
             {"Gamma0", "kHz", ParamBound::positive()},
             {"Gamma_SD", "kHz", ParamBound::positive()},
             {"R_SD", "kHz", ParamBound::positive()},
             {"Gamma_TLS", "kHz", ParamBound::positive()},
             {"t0", "ms", ParamBound::fixed()}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"t12_ms", "t23_ms"}; }

  static PopulationModel::Params population(const Params& p) { return {p[beta], p[t1], p[tz]}; }
  static SpectralDiffusionModel::Params diffusion(const Params& p) {
    return {p[gamma0], p[gamma_sd], p[rate_sd], p[gamma_tls], p[t0]};
  }

  static double value(const Params& p, const Input& in) {
    Params g{};
    return gradient(p, in, g);
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    PopulationModel::Params gp{};
    SpectralDiffusionModel::Params gs{};
    const double f = PopulationModel::gradient(population(p), {in[1]}, gp);
    const double gamma = SpectralDiffusionModel::gradient(diffusion(p), in, gs);
    double slope = 0.0;
    const double k = -4.0 * kPi * in[0];
    const double e = detail::clamped_exp(k * gamma, slope);
    const double v = p[i0] * f * f * e;

    g[i0] = f * f * e;
    const double dpop = 2.0 * p[i0] * f * e;
    g[beta] = dpop * gp[PopulationModel::beta];
    g[t1] = dpop * gp[PopulationModel::t1];
    g[tz] = dpop * gp[PopulationModel::tz];
    const double dgam = slope * v * k;
    g[gamma0] = dgam * gs[SpectralDiffusionModel::gamma0];
    g[gamma_sd] = dgam * gs[SpectralDiffusionModel::gamma_sd];
    g[rate_sd] = dgam * gs[SpectralDiffusionModel::rate_sd];
    g[gamma_tls] = dgam * gs[SpectralDiffusionModel::gamma_tls];
    g[t0] = dgam * gs[SpectralDiffusionModel::t0];
    return v;
  }
};

/// Flip-flop amplitude gamma_max sech^2(g mu_B B / (2 k_B T)).
/// params: gamma_max [kHz], g;  input: B [T], T [K]
struct Sech2Model {
  static constexpr ModelId kId = ModelId::sech2;
  static constexpr std::size_t kParams = 2;
  static constexpr std::size_t kInputs = 2;
  using Params = std::array<double, kParams>;
  using Input = std::array<double, kInputs>;

  enum : std::size_t { gamma_max, g_factor };

  static constexpr std::array<ParamSpec, kParams> param_specs() {
    return {{{"Gamma_max", "kHz", ParamBound::positive()}, {"g", "1", ParamBound::positive()}}};
  }
  static constexpr std::array<std::string_view, kInputs> input_names() { return {"B_T", "T_K"}; }

  // sech^2(a) = 4 e^{-2|a|} / (1 + e^{-2|a|})^2, finite for any a.
  static double sech2(double a) {
    const double e = std::exp(-2.0 * std::abs(a));
    return 4.0 * e / ((1.0 + e) * (1.0 + e));
  }

  static double value(const Params& p, const Input& in) {
    return p[gamma_max] * sech2(p[g_factor] * kMuBOverKB * in[0] / (2.0 * in[1]));
  }

  static double gradient(const Params& p, const Input& in, Params& g) {
    const double k = kMuBOverKB * in[0] / (2.0 * in[1]);
    const double a = p[g_factor] * k;
    const double s = sech2(a);
    g[gamma_max] = s;
    g[g_factor] = p[gamma_max] * (-2.0 * s * std::tanh(a)) * k;
    return p[gamma_max] * s;
  }
};

// ---------------------------------------------------------------------------
// Runtime dispatch over the catalogue.

template <class F>
decltype(auto) visit_model(ModelId id, F&& f) {
  switch (id) {
    case ModelId::mims: return f(MimsModel{});
    case ModelId::field: return f(FieldModel{});
    case ModelId::temperature: return f(TemperatureModel{});
    case ModelId::spectral_diffusion: return f(SpectralDiffusionModel{});
    case ModelId::population: return f(PopulationModel{});
    case ModelId::stimulated_echo: return f(StimulatedEchoModel{});
    case ModelId::sech2: return f(Sech2Model{});
  }
  throw std::invalid_argument("unknown model id");
}

inline std::size_t param_count(ModelId id) {
  return visit_model(id, []<class M>(M) { return M::kParams; });
}

inline std::size_t input_count(ModelId id) {
  return visit_model(id, []<class M>(M) { return M::kInputs; });
}

inline std::vector<ParamSpec> param_specs(ModelId id) {
  return visit_model(id, []<class M>(M) {
    const auto specs = M::param_specs();
    return std::vector<ParamSpec>(specs.begin(), specs.end());
  });
}

inline std::vector<ParamBound> default_bounds(ModelId id) {
  std::vector<ParamBound> out;
  for (const auto& s : param_specs(id)) out.push_back(s.bound);
  return out;
}

inline std::vector<std::string_view> input_names(ModelId id) {
  return visit_model(id, []<class M>(M) {
    const auto names = M::input_names();
    return std::vector<std::string_view>(names.begin(), names.end());
  });
}

/// Named parameter vector for one catalogued model, in base units.
struct ModelParams {
  ModelId model = ModelId::mims;
  std::vector<double> values;

  std::size_t index_of(std::string_view name) const {
    const auto specs = param_specs(model);
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].name == name) return i;
    throw std::invalid_argument("model " + std::string(to_string(model)) + " has no parameter '" +
                                std::string(name) + "'");
  }
  double operator[](std::string_view name) const { return values.at(index_of(name)); }
  double& operator[](std::string_view name) { return values.at(index_of(name)); }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

namespace detail {
template <class Array>
Array to_array(std::span<const double> v, const char* what) {
  Array a{};
  if (v.size() != a.size())
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(a.size()) + " values, got " +
                                std::to_string(v.size()));
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}
}  // namespace detail

inline double model_value(ModelId id, std::span<const double> params, std::span<const double> inputs) {
  return visit_model(id, [&]<class M>(M) {
    return M::value(detail::to_array<typename M::Params>(params, "params"),
                    detail::to_array<typename M::Input>(inputs, "inputs"));
  });
}

/// Analytic partial derivatives of the model with respect to every parameter.
inline std::vector<double> model_gradient(ModelId id, std::span<const double> params, std::span<const double> inputs) {
  return visit_model(id, [&]<class M>(M) {
    typename M::Params g{};
    M::gradient(detail::to_array<typename M::Params>(params, "params"),
                detail::to_array<typename M::Input>(inputs, "inputs"), g);
    return std::vector<double>(g.begin(), g.end());
  });
}

/// One random (parameters, inputs) pair inside the physically valid region
/// of a model, away from exponent clamping. Used by gradient checks.
struct ModelSample {
  std::vector<double> params;
  std::vector<double> inputs;
};

inline ModelSample draw_valid_sample(ModelId id, Rng& rng) {
  auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
  auto lu = [&](double lo, double hi) { return rng.log_uniform(lo, hi); };
  switch (id) {
    case ModelId::mims: {
      const double tm = lu(0.005, 0.2);
      return {{lu(0.05, 5.0), tm, u(0.3, 4.0)}, {u(0.01, 1.5) * tm}};
    }
    case ModelId::field:
      return {{u(1.0, 20.0), u(1.0, 50.0), u(1.0, 30.0), lu(0.05, 1.0), lu(0.001, 0.05)},
              {u(0.005, 2.0), lu(0.007, 0.6)}};
    case ModelId::temperature: return {{u(0.0, 20.0), lu(1.0, 500.0), u(0.5, 3.0)}, {lu(0.005, 0.6)}};
    case ModelId::spectral_diffusion: {
      const double t0 = lu(0.01, 0.2);
      return {{u(1.0, 20.0), u(0.5, 60.0), lu(0.1, 5.0), u(0.5, 20.0), t0}, {lu(5e-5, 2e-3), t0 * lu(1.0, 300.0)}};
    }
    case ModelId::population: {
      const double t1 = lu(1.0, 20.0);
      // Keep T_Z clear of T1 so the finite-difference check stays on the
      // regular branch.
      const double tz = u(0.0, 1.0) < 0.5 ? t1 * lu(1.05, 1000.0) : t1 / lu(1.05, 10.0);
      return {{u(0.0, 2.0), t1, tz}, {u(0.0, 5.0) * t1}};
    }
    case ModelId::stimulated_echo: {
      const double t1 = lu(2.0, 20.0);
      const double t0 = lu(0.01, 0.2);
      return {{lu(0.1, 2.0), t1, t1 * lu(1.5, 1000.0), u(0.0, 2.0), u(1.0, 20.0), u(0.5, 60.0), lu(0.1, 5.0),
               u(0.5, 20.0), t0},
              {lu(5e-5, 2e-3), t0 * lu(1.0, 200.0)}};
    }
    case ModelId::sech2: return {{u(1.0, 60.0), lu(0.05, 2.0)}, {u(0.001, 0.5), lu(0.007, 0.6)}};
  }
  throw std::invalid_argument("unknown model id");
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences (step 1e-6 |p|, or 1e-6 when p is zero) over `draws` random samples.
///
/// The denominator is floored at 1e-4 |f| / |p| so partials that
/// vanish at a sample point compare on an absolute scale.
inline double max_gradient_error(ModelId id, std::size_t draws, Rng& rng) {
  double worst = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const ModelSample s = draw_valid_sample(id, rng);
    const double f = model_value(id, s.params, s.inputs);
    const std::vector<double> analytic = model_gradient(id, s.params, s.inputs);
    for (std::size_t i = 0; i < s.params.size(); ++i) {
      const double scale = s.params[i] != 0.0 ? std::abs(s.params[i]) : 1.0;
      const double h = 1e-6 * scale;
      std::vector<double> up = s.params;
      std::vector<double> down = s.params;
      up[i] += h;
      down[i] -= h;
      const double fd = (model_value(id, up, s.inputs) - model_value(id, down, s.inputs)) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-4 * std::abs(f) / scale});
      if (denom == 0.0) continue;
      worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
  }
  return worst;
}

}  // namespace echofit
