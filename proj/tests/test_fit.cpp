#include <gtest/gtest.h>

#include <cmath>
#include <span>
#include <vector>

#include "echofit/fit.hpp"
#include "echofit/guess.hpp"
#include "echofit/models.hpp"
#include "echofit/presets.hpp"
#include "echofit/random.hpp"

using namespace echofit;

namespace {

using Obs1 = Observation<1>;
using Obs2 = Observation<2>;

const MimsModel::Params kMimsTruth{0.8, 0.04, 1.3};

// 50 points on [0.25, 30] us, optionally with multiplicative noise.
std::vector<Obs1> mims_data(double noise, std::uint64_t seed, const MimsModel::Params& truth = kMimsTruth) {
  Rng rng(seed);
  std::vector<Obs1> out;
  for (int i = 0; i < 50; ++i) {
    const double t = 2.5e-4 + (0.03 - 2.5e-4) * i / 49.0;
    double y = MimsModel::value(truth, {t});
    if (noise > 0.0) y *= 1.0 + noise * rng.normal();
    out.push_back({{t}, y});
  }
  return out;
}

std::vector<Obs2> field_data(double noise, std::uint64_t seed) {
  const auto truth = to_model_params(presets::field_7mK());
  Rng rng(seed);
  std::vector<Obs2> out;
  for (double b : {0.0, 0.01, 0.03, 0.05, 0.07, 0.09, 0.14, 0.2, 0.3, 0.4, 0.6, 0.9, 1.4, 2.0}) {
    double y = model_value(ModelId::field, truth.values, std::vector<double>{b, 0.007});
    if (noise > 0.0) y *= 1.0 + noise * rng.normal();
    out.push_back({{b, 0.007}, y});
  }
  return out;
}

FitResult fit_mims(const std::vector<Obs1>& d, FitConfig cfg = default_config(ModelId::mims)) {
  const auto g = initial_guess(MimsModel{}, std::span<const Obs1>(d));
  return multi_start_fit(MimsModel{}, std::span<const Obs1>(d), g.params, default_bounds(ModelId::mims), cfg);
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Fit, NoiselessMimsRecoversTruth) {
  const FitResult r = fit_mims(mims_data(0.0, 0));
  ASSERT_TRUE(r.converged) << r.message;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(rel(r.params.values[i], kMimsTruth[i]), 1e-6) << i;
    EXPECT_LT(r.standard_errors[i], 1e-6 * kMimsTruth[i]) << i;
  }
}

TEST(Fit, NoisyMimsWithRestarts) {
  FitConfig cfg = default_config(ModelId::mims);
  cfg.restarts = 8;
  cfg.seed = 42;
  const FitResult r = fit_mims(mims_data(0.02, 42), cfg);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(rel(r.params.values[MimsModel::phase_memory], 0.04), 0.05);
  EXPECT_LT(std::abs(r.params.values[MimsModel::exponent] - 1.3), 0.15);
  EXPECT_GE(r.restarts_agreeing, 1);
  EXPECT_LE(r.restarts_agreeing, 8);
  // Truth inside a 4-sigma band.
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LT(std::abs(r.params.values[i] - kMimsTruth[i]), 4.0 * r.standard_errors[i]) << i;
}

TEST(Fit, SingleRestartIsPlainFit) {
  const auto d = mims_data(0.02, 3);
  const auto g = initial_guess(MimsModel{}, std::span<const Obs1>(d));
  const FitConfig cfg = default_config(ModelId::mims);
  const FitResult a = fit(MimsModel{}, std::span<const Obs1>(d), g.params, default_bounds(ModelId::mims), cfg);
  const FitResult b = multi_start_fit(MimsModel{}, std::span<const Obs1>(d), g.params, default_bounds(ModelId::mims), cfg);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.sse, b.sse);
  EXPECT_EQ(b.restarts_agreeing, 1);
}

TEST(Fit, FieldModelFromPoorStartWithRestarts) {
  const auto d = field_data(0.0, 0);
  FieldModel::Params init{7.42 * 1.4, 32.6 * 0.7, 17.62 * 1.4, 0.3507 * 0.7, 0.0064 * 1.4};
  FitConfig cfg = default_config(ModelId::field);
  cfg.restarts = 8;
  cfg.seed = 11;
  const FitResult r = multi_start_fit(FieldModel{}, std::span<const Obs2>(d), init, default_bounds(ModelId::field), cfg);
  const auto truth = to_model_params(presets::field_7mK());
  ASSERT_TRUE(r.converged);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_LT(rel(r.params.values[i], truth.values[i]), 1e-6) << i;
  EXPECT_FALSE(r.ordering_violation);
}

TEST(Fit, SseTraceIsNonIncreasing) {
  const FitResult r = fit_mims(mims_data(0.02, 5));
  ASSERT_GE(r.sse_trace.size(), 2u);
  for (std::size_t i = 1; i < r.sse_trace.size(); ++i) EXPECT_LE(r.sse_trace[i], r.sse_trace[i - 1]);
  EXPECT_EQ(r.sse_trace.back(), r.sse);
}

TEST(Fit, RefitFromOptimumStaysPut) {
  const auto d = mims_data(0.02, 6);
  const FitResult r = fit_mims(d);
  MimsModel::Params p{};
  std::copy(r.params.values.begin(), r.params.values.end(), p.begin());
  const FitResult again = fit(MimsModel{}, std::span<const Obs1>(d), p, default_bounds(ModelId::mims),
                              default_config(ModelId::mims));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(rel(again.params.values[i], p[i]), 1e-12) << i;
}

TEST(Fit, PositiveParametersStayPositive) {
  // Temperature law whose floor is truly zero: the fit pushes toward the bound.
  std::vector<Obs1> d;
  for (int i = 0; i < 12; ++i) {
    const double t = 0.01 * std::pow(50.0, i / 11.0);
    d.push_back({{t}, TemperatureModel::value({0.0, 100.0, 1.34}, {t}) * (i % 2 ? 0.99 : 1.01)});
  }
  const FitResult r = fit(TemperatureModel{}, std::span<const Obs1>(d), {5.0, 80.0, 1.2},
                          default_bounds(ModelId::temperature), default_config(ModelId::temperature));
  EXPECT_GT(r.params.values[TemperatureModel::floor], 0.0);
  EXPECT_GT(r.params.values[TemperatureModel::amplitude], 0.0);
}

TEST(Fit, PointsOutsideWindowHaveNoInfluence) {
  const auto base = mims_data(0.02, 8);
  auto polluted = base;
  // Garbage before 250 ns.
  polluted.insert(polluted.begin(), {{{1e-5}, 123.0}, {{1e-4}, 1e-9}, {{2e-4}, 5.0}});
  const auto g = initial_guess(MimsModel{}, std::span<const Obs1>(base)).params;
  FitConfig cfg = default_config(ModelId::mims);
  cfg.restarts = 4;
  const FitResult a = multi_start_fit(MimsModel{}, std::span<const Obs1>(base), g, default_bounds(ModelId::mims), cfg);
  const FitResult b =
      multi_start_fit(MimsModel{}, std::span<const Obs1>(polluted), g, default_bounds(ModelId::mims), cfg);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.standard_errors, b.standard_errors);
  EXPECT_EQ(a.points, b.points);
}

TEST(Fit, DuplicatedPointsShrinkErrorsBySqrtTwo) {
  const auto d = mims_data(0.02, 9);
  auto doubled = d;
  doubled.insert(doubled.end(), d.begin(), d.end());
  const FitResult a = fit_mims(d);
  const FitResult b = fit_mims(doubled);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(a.params.values[i], b.params.values[i], 1e-9 * std::abs(a.params.values[i]));
    EXPECT_NEAR(b.standard_errors[i] / a.standard_errors[i], 1.0 / std::sqrt(2.0), 0.05 / std::sqrt(2.0)) << i;
  }
}

TEST(Fit, ErrorsScaleWithNoise) {
  double prev = std::numeric_limits<double>::infinity();
  for (double noise : {0.05, 0.02, 0.005}) {
    const FitResult r = fit_mims(mims_data(noise, 10));
    const double se = r.standard_errors[MimsModel::phase_memory];
    EXPECT_LT(se, prev);
    // Relative error of T_M tracks the noise level.
    EXPECT_GT(se / 0.04, 0.02 * noise);
    EXPECT_LT(se / 0.04, 1.0 * noise);
    prev = se;
  }
}

TEST(Fit, UnderdeterminedThrows) {
  const std::vector<Obs1> d{{{3e-4}, 0.7}, {{1e-3}, 0.6}, {{2e-3}, 0.5}};
  EXPECT_THROW(fit(MimsModel{}, std::span<const Obs1>(d), kMimsTruth, default_bounds(ModelId::mims),
                   default_config(ModelId::mims)),
               FitError);
}

TEST(Fit, InitialValueOutsideBoundsThrows) {
  const auto d = mims_data(0.0, 0);
  EXPECT_THROW(fit(MimsModel{}, std::span<const Obs1>(d), {0.8, 0.04, 5.0}, default_bounds(ModelId::mims),
                   default_config(ModelId::mims)),
               FitError);
  EXPECT_THROW(fit(MimsModel{}, std::span<const Obs1>(d), {0.8, -0.04, 1.3}, default_bounds(ModelId::mims),
                   default_config(ModelId::mims)),
               FitError);
}

TEST(Fit, FixedParametersKeepValueAndZeroError) {
  const auto d = mims_data(0.02, 12);
  auto bounds = default_bounds(ModelId::mims);
  bounds[MimsModel::exponent] = ParamBound::fixed();
  const FitResult r = fit(MimsModel{}, std::span<const Obs1>(d), {0.7, 0.05, 1.3}, bounds, default_config(ModelId::mims));
  EXPECT_EQ(r.params.values[MimsModel::exponent], 1.3);
  EXPECT_EQ(r.standard_errors[MimsModel::exponent], 0.0);
  EXPECT_EQ(r.dof, r.points - 2);
}

TEST(Fit, CollinearParametersReportedUndetermined) {
  // t12 = 0 and t23 >> 1/R_SD: Gamma0 and Gamma_SD enter only as Gamma0 + Gamma_SD / 2.
  std::vector<Obs2> d;
  const SpectralDiffusionModel::Params truth{8.0, 30.0, 5.0, 10.0, 0.05};
  for (int i = 0; i < 20; ++i) {
    const double t23 = 20.0 + 5.0 * i;
    d.push_back({{0.0, t23}, SpectralDiffusionModel::value(truth, {0.0, t23}) * (i % 2 ? 0.995 : 1.005)});
  }
  const FitResult r = fit(SpectralDiffusionModel{}, std::span<const Obs2>(d), truth,
                          default_bounds(ModelId::spectral_diffusion), default_config(ModelId::spectral_diffusion));
  EXPECT_TRUE(r.undetermined[SpectralDiffusionModel::gamma0] || r.undetermined[SpectralDiffusionModel::gamma_sd]);
  bool any_inf = false;
  for (std::size_t i = 0; i < r.standard_errors.size(); ++i)
    if (r.undetermined[i]) {
      EXPECT_TRUE(std::isinf(r.standard_errors[i]));
      any_inf = true;
    }
  EXPECT_TRUE(any_inf);
  EXPECT_FALSE(r.undetermined[SpectralDiffusionModel::gamma_tls]);
}

TEST(Fit, FieldOrderingViolationIsFlaggedNotSwapped) {
  // Roles of the two exponentials exchanged: g1 < g2.
  const FieldModel::Params swapped{7.42, 17.62, 32.6, 0.0064, 0.3507};
  std::vector<Obs2> d;
  for (double b : {0.0, 0.01, 0.03, 0.05, 0.07, 0.09, 0.14, 0.2, 0.3, 0.4, 0.6, 0.9, 1.4, 2.0})
    d.push_back({{b, 0.007}, FieldModel::value(swapped, {b, 0.007})});
  const FitResult r = fit(FieldModel{}, std::span<const Obs2>(d), swapped, default_bounds(ModelId::field),
                          default_config(ModelId::field));
  EXPECT_TRUE(r.ordering_violation);
  EXPECT_LT(r.params.values[FieldModel::g1], r.params.values[FieldModel::g2]);
}

TEST(Fit, SigmaWeightsMatchRelativeWeighting) {
  // Linear residuals with sigma = 2% of value equal relative weighting up to
  // a constant factor, so the optimum is the same.
  auto d = field_data(0.03, 13);
  auto weighted = d;
  for (auto& o : weighted) o.sigma = 0.02 * o.value;
  const auto g = initial_guess(FieldModel{}, std::span<const Obs2>(d)).params;
  const FitResult a = fit(FieldModel{}, std::span<const Obs2>(d), g, default_bounds(ModelId::field),
                          default_config(ModelId::field));
  const FitResult b = fit(FieldModel{}, std::span<const Obs2>(weighted), g, default_bounds(ModelId::field),
                          default_config(ModelId::field));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.params.values[i], b.params.values[i], 1e-6 * std::abs(a.params.values[i]));
}

TEST(Fit, RuntimeDispatchMatchesTyped) {
  const auto d = mims_data(0.02, 14);
  Dataset ds;
  for (const auto& o : d) {
    ds.inputs.push_back({o.input[0]});
    ds.values.push_back(o.value);
  }
  const ModelParams init = initial_guess(ModelId::mims, ds);
  const FitResult a = fit(ModelId::mims, ds, init, default_bounds(ModelId::mims), default_config(ModelId::mims));
  const FitResult b = fit_mims(d);
  EXPECT_EQ(a.params.values, b.params.values);
}

TEST(Fit, UncertaintiesRecomputeMatches) {
  const auto d = mims_data(0.02, 15);
  const FitResult r = fit_mims(d);
  const auto se = uncertainties(MimsModel{}, std::span<const Obs1>(d), r, default_config(ModelId::mims));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(se[i], r.standard_errors[i]);
}

// -- initial guesses ---------------------------------------------------------------

TEST(Guess, MimsNoiselessCloseToTruth) {
  const auto d = mims_data(0.0, 0);
  const auto g = initial_guess(MimsModel{}, std::span<const Obs1>(d));
  EXPECT_FALSE(g.degenerate);
  EXPECT_LT(rel(g.params[MimsModel::phase_memory], 0.04), 0.5);
  EXPECT_LT(rel(g.params[MimsModel::i0], 0.8), 0.1);
}

TEST(Guess, ConstantDataIsDegenerate) {
  std::vector<Obs1> d;
  for (int i = 0; i < 20; ++i) d.push_back({{3e-4 + 1e-3 * i}, 0.5});
  const auto g = initial_guess(MimsModel{}, std::span<const Obs1>(d));
  EXPECT_TRUE(g.degenerate);
}

TEST(Guess, FieldWithinFactorThree) {
  const auto d = field_data(0.0, 0);
  const auto g = initial_guess(FieldModel{}, std::span<const Obs2>(d));
  const auto truth = to_model_params(presets::field_7mK());
  EXPECT_FALSE(g.degenerate);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_LT(g.params[i] / truth.values[i], 3.0) << i;
    EXPECT_GT(g.params[i] / truth.values[i], 1.0 / 3.0) << i;
  }
  EXPECT_GT(g.params[FieldModel::g1], g.params[FieldModel::g2]);
}

TEST(Guess, TooFewPointsThrows) {
  const std::vector<Obs1> d{{{1e-3}, 1.0}, {{2e-3}, 0.5}};
  EXPECT_THROW(initial_guess(MimsModel{}, std::span<const Obs1>(d)), FitError);
}

TEST(Config, DefaultsPerModel) {
  const FitConfig m = default_config(ModelId::mims);
  EXPECT_EQ(m.residual_space, ResidualSpace::log_intensity);
  ASSERT_TRUE(m.window.has_value());
  EXPECT_EQ(m.window->min, 250e-6);
  EXPECT_EQ(default_config(ModelId::field).residual_space, ResidualSpace::linear);
  EXPECT_EQ(default_config(ModelId::field).weighting, Weighting::relative);
  FitConfig bad;
  bad.restarts = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
