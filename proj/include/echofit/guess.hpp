#pragma once

// Data-driven starting points for every catalogued model.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "echofit/catalog.hpp"
#include "echofit/error.hpp"
#include "echofit/fit.hpp"

namespace echofit {

template <class M>
struct InitialGuess {
  typename M::Params params{};
  bool degenerate = false;  // data carry no usable information for some parameter
};

/// Fixed lifetimes used while guessing a stimulated-echo start.
struct EchoLifetimes {
  double t1_ms = 9.0;
  double tz_ms = 1000.0;
};

namespace detail {

template <std::size_t N>
void require_points(std::span<const Observation<N>> data) {
  if (data.size() < 3) throw FitError("initial_guess needs at least 3 points");
}

template <std::size_t N>
std::vector<Observation<N>> sorted_by(std::span<const Observation<N>> data, std::size_t axis) {
  std::vector<Observation<N>> v(data.begin(), data.end());
  std::stable_sort(v.begin(), v.end(), [axis](const auto& a, const auto& b) { return a.input[axis] < b.input[axis]; });
  return v;
}

// Least-squares slope and intercept of y on x.
inline std::pair<double, double> linear_regression(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Spectral-diffusion starting values from a linewidth series Gamma(t23):
// Gamma0 at the shortest t23, Gamma_TLS from the log-slope over the early
// half, the excess at the longest t23 assigned to Gamma_SD, R_SD = 1/median.
inline std::array<double, 4> guess_diffusion(std::vector<double> t23, std::vector<double> gamma) {
  std::vector<std::size_t> order(t23.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t23[a] < t23[b]; });
  std::vector<double> ts;
  std::vector<double> gs;
  for (std::size_t i : order) {
    ts.push_back(t23[i]);
    gs.push_back(gamma[i]);
  }
  const double t0 = ts.front();
  const double g0 = std::max(gs.front(), 0.1);
  const std::size_t half = std::max<std::size_t>(2, ts.size() / 2);
  std::vector<double> lx;
  for (std::size_t i = 0; i < half; ++i) lx.push_back(std::log10(ts[i] / t0));
  const double tls = std::max(linear_regression(lx, std::span<const double>(gs.data(), half)).first, 0.1);
  const double excess = gs.back() - g0 - tls * std::log10(ts.back() / t0);
  const double gsd = std::max(2.0 * excess, 1.0);
  const double rate = 1.0 / median(ts);
  return {g0, gsd, rate, tls};
}

}  // namespace detail

/// Mims: I0 from the earliest point, T_M from the 1/e^2 crossing of the
/// normalised intensity (exact for x = 1), x = 1. Non-decaying data is
/// flagged degenerate with T_M = +inf.
inline InitialGuess<MimsModel> initial_guess(MimsModel, std::span<const Observation<1>> data) {
  detail::require_points(data);
  const auto v = detail::sorted_by<1>(data, 0);
  InitialGuess<MimsModel> g;
  const double i0 = v.front().value;
  const double t_first = v.front().input[0];
  g.params = {i0 > 0.0 ? i0 : 1.0, std::numeric_limits<double>::infinity(), 1.0};
  if (!(i0 > 0.0)) {
    g.degenerate = true;
    return g;
  }
  const double target = std::exp(-2.0);
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double a = v[i - 1].value / i0;
    const double b = v[i].value / i0;
    if (a > target && b <= target && b > 0.0) {
      const double la = std::log(a);
      const double lb = std::log(b);
      const double f = (la - std::log(target)) / (la - lb);
      const double cross = v[i - 1].input[0] + f * (v[i].input[0] - v[i - 1].input[0]);
      g.params[MimsModel::phase_memory] = 2.0 * (cross - t_first);
      return g;
    }
  }
  // No crossing: extrapolate ln(I/I0) = -4 (t - t_first) / T_M.
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& o : v) {
    if (o.value <= 0.0) continue;
    x.push_back(o.input[0] - t_first);
    y.push_back(std::log(o.value / i0));
  }
  const double slope = x.size() >= 2 ? detail::linear_regression(x, y).first : 0.0;
  if (slope < 0.0 && std::isfinite(slope))
    g.params[MimsModel::phase_memory] = -4.0 / slope;
  else
    g.degenerate = true;
  return g;
}

/// Field model: gamma0 = min, alpha1 = Gamma(0) - gamma0,
/// alpha2 = Gamma(B_max) - gamma0, g1 and g2 from the fields at which the
/// decaying and rising parts reach half their amplitude.
inline InitialGuess<FieldModel> initial_guess(FieldModel, std::span<const Observation<2>> data) {
  detail::require_points(data);
  const auto v = detail::sorted_by<2>(data, 0);
  const double temperature = v.front().input[1];
  const double c = kMuBOverKB / temperature;
  std::size_t imin = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i].value < v[imin].value) imin = i;

  InitialGuess<FieldModel> g;
  const double g0 = std::max(v[imin].value, 1e-3);
  const double a1 = std::max(v.front().value - g0, 1e-3 * g0);
  const double a2 = std::max(v.back().value - g0, 1e-3 * g0);

  auto crossing = [&](std::size_t from, std::size_t to, double level, bool falling) {
    for (std::size_t i = from + 1; i <= to && i < v.size(); ++i) {
      const double a = v[i - 1].value;
      const double b = v[i].value;
      if (falling ? (a > level && b <= level) : (a < level && b >= level)) {
        const double f = (a - level) / (a - b);
        return v[i - 1].input[0] + f * (v[i].input[0] - v[i - 1].input[0]);
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };

  const double b_fall = crossing(0, imin, g0 + 0.5 * a1, true);
  const double b_rise = crossing(imin, v.size() - 1, g0 + 0.5 * a2, false);
  const double b_max = v.back().input[0];
  double g1 = std::isfinite(b_fall) && b_fall > 0.0 ? std::log(2.0) / (c * b_fall) : 10.0 / (c * std::max(b_max, 1e-3));
  double g2 = std::isfinite(b_rise) && b_rise > 0.0 ? std::log(2.0) / (c * b_rise) : 0.5 / (c * std::max(b_max, 1e-3));
  if (!std::isfinite(b_fall) || !std::isfinite(b_rise)) g.degenerate = true;
  if (g2 >= g1) g2 = 0.1 * g1;
  g.params = {g0, a1, a2, g1, g2};
  return g;
}

/// Temperature model: floor just below the smallest linewidth, amplitude and
/// exponent from a log-log regression of the excess.
inline InitialGuess<TemperatureModel> initial_guess(TemperatureModel, std::span<const Observation<1>> data) {
  detail::require_points(data);
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& o : data) lo = std::min(lo, o.value);
  InitialGuess<TemperatureModel> g;
  const double floor = std::max(0.9 * lo, 1e-3);
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& o : data) {
    const double excess = o.value - floor;
    if (excess > 0.0 && o.input[0] > 0.0) {
      x.push_back(std::log(o.input[0]));
      y.push_back(std::log(excess));
    }
  }
  double n = 1.0;
  double amp = 1.0;
  if (x.size() >= 2) {
    const auto [slope, icpt] = detail::linear_regression(x, y);
    n = std::clamp(slope, 0.6, 2.9);
    amp = std::exp(icpt);
  } else {
    g.degenerate = true;
  }
  g.params = {floor, amp, n};
  return g;
}

/// Spectral-diffusion linewidth data Gamma(t12, t23); t0 = shortest t23.
inline InitialGuess<SpectralDiffusionModel> initial_guess(SpectralDiffusionModel, std::span<const Observation<2>> data) {
  detail::require_points(data);
  std::vector<double> t23;
  std::vector<double> gamma;
  for (const auto& o : data) {
    t23.push_back(o.input[1]);
    gamma.push_back(o.value);
  }
  const auto d = detail::guess_diffusion(t23, gamma);
  InitialGuess<SpectralDiffusionModel> g;
  g.params = {d[0], d[1], d[2], d[3], *std::min_element(t23.begin(), t23.end())};
  return g;
}

/// Population factor data: T1 from the 1/e point, T_Z = 100 T1, beta = 0.5.
inline InitialGuess<PopulationModel> initial_guess(PopulationModel, std::span<const Observation<1>> data) {
  detail::require_points(data);
  const auto v = detail::sorted_by<1>(data, 0);
  InitialGuess<PopulationModel> g;
  double t1 = std::numeric_limits<double>::quiet_NaN();
  const double top = v.front().value;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i].value <= top * std::exp(-1.0)) {
      t1 = v[i].input[0] - v.front().input[0];
      break;
    }
  if (!(t1 > 0.0)) {
    t1 = std::max(v.back().input[0], 1e-3);
    g.degenerate = true;
  }
  g.params = {0.5, t1, 100.0 * t1};
  return g;
}

/// Stimulated echo: per-t23 linewidths from the log-ratio of the shortest-
/// and longest-t12 traces, then the spectral-diffusion heuristic; beta = 0.5;
/// I0 from the earliest point of the shortest-t12 trace.
inline InitialGuess<StimulatedEchoModel> initial_guess(StimulatedEchoModel, std::span<const Observation<2>> data,
                                                       EchoLifetimes lifetimes = {}) {
  detail::require_points(data);
  std::map<double, std::vector<std::pair<double, double>>> by_t12;  // t12 -> (t23, I)
  double t0 = std::numeric_limits<double>::infinity();
  std::vector<double> all_t23;
  for (const auto& o : data) {
    by_t12[o.input[0]].emplace_back(o.input[1], o.value);
    t0 = std::min(t0, o.input[1]);
    all_t23.push_back(o.input[1]);
  }
  for (auto& [t12, pts] : by_t12) std::sort(pts.begin(), pts.end());

  InitialGuess<StimulatedEchoModel> g;
  std::array<double, 4> sd{10.0, 20.0, 1.0 / detail::median(all_t23), 5.0};
  if (by_t12.size() >= 2) {
    const auto& [ts, short_pts] = *by_t12.begin();
    const auto& [tl, long_pts] = *by_t12.rbegin();
    std::vector<double> t23;
    std::vector<double> gamma;
    for (const auto& [t, il] : long_pts) {
      // Interpolate the short-t12 trace in log intensity at t.
      for (std::size_t i = 1; i < short_pts.size(); ++i) {
        const auto [ta, ia] = short_pts[i - 1];
        const auto [tb, ib] = short_pts[i];
        if (t >= ta && t <= tb && ia > 0.0 && ib > 0.0 && il > 0.0) {
          const double f = tb > ta ? (t - ta) / (tb - ta) : 0.0;
          const double ls = std::log(ia) + f * (std::log(ib) - std::log(ia));
          t23.push_back(t);
          gamma.push_back((ls - std::log(il)) / (4.0 * kPi * (tl - ts)));
          break;
        }
      }
    }
    if (t23.size() >= 3)
      sd = detail::guess_diffusion(t23, gamma);
    else
      g.degenerate = true;
  } else {
    g.degenerate = true;
  }

  using E = StimulatedEchoModel;
  g.params = {1.0, lifetimes.t1_ms, lifetimes.tz_ms, 0.5, sd[0], sd[1], sd[2], sd[3], t0};
  const auto& [t12_first, pts_first] = *by_t12.begin();
  const auto [t23_first, i_first] = pts_first.front();
  const double shape = E::value(g.params, {t12_first, t23_first});
  if (i_first > 0.0 && shape > 0.0) g.params[E::i0] = i_first / shape;
  return g;
}

/// sech^2 amplitude data versus field: Gamma_max from the largest value, g
/// from the half-maximum field (sech^2(a) = 1/2 at a = ln(1 + sqrt 2)).
inline InitialGuess<Sech2Model> initial_guess(Sech2Model, std::span<const Observation<2>> data) {
  detail::require_points(data);
  const auto v = detail::sorted_by<2>(data, 0);
  double top = 0.0;
  for (const auto& o : v) top = std::max(top, o.value);
  InitialGuess<Sech2Model> g;
  g.params = {std::max(top, 1e-3), 1.0};
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].value <= 0.5 * top && v[i].input[0] > 0.0) {
      const double a = std::log(1.0 + std::sqrt(2.0));
      g.params[Sech2Model::g_factor] = a * 2.0 * v[i].input[1] / (kMuBOverKB * v[i].input[0]);
      return g;
    }
  }
  g.degenerate = true;
  return g;
}

/// Runtime-dispatched guess for untyped data.
inline ModelParams initial_guess(ModelId id, const Dataset& data, bool* degenerate = nullptr) {
  return visit_model(id, [&]<class M>(M model) {
    const auto obs = to_observations<M::kInputs>(data);
    const auto g = initial_guess(model, std::span<const Observation<M::kInputs>>(obs));
    if (degenerate) *degenerate = g.degenerate;
    return ModelParams{id, std::vector<double>(g.params.begin(), g.params.end())};
  });
}

}  // namespace echofit
