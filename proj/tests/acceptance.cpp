// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "echofit/echofit.hpp"

using namespace echofit;
using namespace echofit::literals;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_s > 0 && secs > budget_s) {
    o.passed = false;
    o.detail += " (over time budget)";
  }
  if (!o.passed) ++failures;
  std::printf("%s %2d %s: %s [%.2f s]\n", o.passed ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string format(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

constexpr double kTrueTm = 0.04;  // ms
constexpr double kTrueX = 1.3;

FitResult mims_trial(double noise, std::uint64_t seed) {
  SynthSpec s;
  s.truth = to_model_params(MimsParams{1.0, Duration::milliseconds(kTrueTm), kTrueX});
  s.grid = Grid::linear(2.5e-4, 0.03, 50);
  s.noise = noise > 0 ? Noise::multiplicative(noise) : Noise::none();
  s.seed = seed;
  const Dataset d = synth_dataset(s);
  FitConfig cfg = default_config(ModelId::mims);
  return fit(ModelId::mims, d, initial_guess(ModelId::mims, d), default_bounds(ModelId::mims), cfg);
}

std::vector<EchoTrace> echo_traces(std::uint64_t seed) {
  const auto p = presets::echo_7mK_009T();
  std::vector<EchoTrace> out;
  std::uint64_t k = 0;
  for (double t12 : {90e-6, 330e-6, 1068e-6}) {
    SynthSpec s;
    s.truth = to_model_params(p.three_level, p.diffusion);
    s.grid = Grid::logarithmic(0.05, 7.5, 40);
    s.axis = 1;
    s.fixed_inputs = {t12, 0.0};
    s.noise = Noise::multiplicative(0.03);
    s.seed = seed * 16 + k++;
    s.condition = {p.temperature_K, p.field_T};
    out.push_back(synth_trace(s));
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

int main() {
  const FieldModelParams field = presets::field_7mK();

  criterion(1, "zero-field linewidth", 0, [&] {
    const double v = field_linewidth(field, 0.0, 0.007).khz();
    return Outcome{std::abs(v - 40.02) <= 1e-9, format("Gamma(0) = %.12f kHz", v)};
  });

  criterion(2, "high-field asymptote", 0, [&] {
    // Both exponent arguments exceed 50 once g2*c*B > 50.
    const double c = kMuBOverKB / 0.007;
    double worst = 0.0;
    for (double b : {51.0 / (field.g2 * c), 100.0 / (field.g2 * c), 1000.0 / (field.g2 * c)})
      worst = std::max(worst, std::abs(field_linewidth(field, b, 0.007).khz() - 25.04));
    return Outcome{worst < 1e-6, format("max |Gamma - 25.04| = %.3g kHz", worst)};
  });

  criterion(3, "field minimum", 1.0, [&] {
    const double c = kMuBOverKB / 0.007;
    const double analytic = std::log(field.alpha1.khz() * field.g1 / (field.alpha2.khz() * field.g2)) /
                            ((field.g1 - field.g2) * c);
    const FieldMinimum m = field_linewidth_minimum(field, 0.007, 2.0);
    const double g = m.linewidth.khz();
    return Outcome{std::abs(m.field_T - analytic) < 1e-4 && g >= 8.5 && g <= 10.0 && !m.on_boundary(),
                   format("B* = %.6f T (analytic %.6f T), Gamma* = %.4f kHz", m.field_T, analytic, g)};
  });

  criterion(4, "linewidth from phase memory", 0, [] {
    const double v = gamma_eff_from_tm(40.0_us).khz();
    return Outcome{std::abs(v - 7.96) <= 0.01, format("T_M = 40 us -> %.4f kHz", v)};
  });

  criterion(5, "analytic gradients", 10.0, [] {
    Rng rng(7);
    double worst = 0.0;
    std::string at;
    for (ModelId id : kAllModels) {
      const double e = max_gradient_error(id, 100, rng);
      if (e >= worst) {
        worst = e;
        at = std::string(to_string(id));
      }
    }
    return Outcome{worst < 1e-5, format("max relative error %.3g (%s), 100 draws per model", worst, at.c_str())};
  });

  criterion(6, "two-pulse round trip", 30.0, [] {
    const FitResult clean = mims_trial(0.0, 1);
    const double clean_err = std::max(std::abs(clean.params.values[MimsModel::phase_memory] / kTrueTm - 1.0),
                                      std::abs(clean.params.values[MimsModel::exponent] / kTrueX - 1.0));
    std::vector<double> tm_err;
    std::vector<double> x_err;
    for (std::uint64_t s = 0; s < 200; ++s) {
      const FitResult r = mims_trial(0.02, 1000 + s);
      tm_err.push_back(std::abs(r.params.values[MimsModel::phase_memory] / kTrueTm - 1.0));
      x_err.push_back(std::abs(r.params.values[MimsModel::exponent] - kTrueX));
    }
    const double mt = median(tm_err);
    const double mx = median(x_err);
    return Outcome{mt < 0.02 && mx < 0.05 && clean_err <= 1e-6,
                   format("median |dT_M|/T_M = %.4f, median |dx| = %.4f, noiseless %.2g", mt, mx, clean_err)};
  });

  criterion(7, "field-model round trip", 60.0, [&] {
    const FieldModelParams sigma = presets::field_7mK_uncertainty();
    const std::vector<double> truth = to_model_params(field).values;
    const std::vector<double> tol = to_model_params(sigma).values;
    int all_ok = 0;
    std::vector<int> per(truth.size(), 0);
    for (std::uint64_t s = 0; s < 50; ++s) {
      SynthSpec spec;
      spec.truth = to_model_params(field);
      spec.grid = Grid::explicit_points(demo::field_grid());
      spec.fixed_inputs = {0.0, 0.007};
      spec.noise = Noise::multiplicative(0.03);
      spec.seed = 5000 + s;
      const Dataset d = synth_dataset(spec);
      FitConfig cfg = default_config(ModelId::field);
      cfg.restarts = 8;
      cfg.seed = s;
      const FitResult r = fit(ModelId::field, d, initial_guess(ModelId::field, d), default_bounds(ModelId::field), cfg);
      bool ok = r.converged;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool in = std::abs(r.params.values[i] - truth[i]) <= 3.0 * tol[i];
        per[i] += in;
        ok = ok && in;
      }
      all_ok += ok;
    }
    return Outcome{all_ok >= 45, format("%d/50 trials with all five within 3 sigma_quoted (need 45); per parameter "
                                        "%d/%d/%d/%d/%d",
                                        all_ok, per[0], per[1], per[2], per[3], per[4])};
  });

  criterion(8, "three-pulse round trip", 120.0, [] {
    const auto p = presets::echo_7mK_009T();
    const SpectralDiffusionParams sigma = presets::echo_7mK_009T_uncertainty();
    PipelineConfig cfg;
    cfg.tz_table.push_back({{p.temperature_K, p.field_T}, 2.0});
    const std::size_t idx[4] = {StimulatedEchoModel::gamma0, StimulatedEchoModel::gamma_tls,
                                StimulatedEchoModel::gamma_sd, StimulatedEchoModel::rate_sd};
    const double truth[4] = {p.diffusion.gamma0.khz(), p.diffusion.gamma_tls.khz(), p.diffusion.gamma_sd.khz(),
                             p.diffusion.rate_sd.khz()};
    const double tol[4] = {sigma.gamma0.khz(), sigma.gamma_tls.khz(), sigma.gamma_sd.khz(), sigma.rate_sd.khz()};
    int all_ok = 0;
    int per[4] = {0, 0, 0, 0};
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto traces = echo_traces(700 + s);
      std::vector<const EchoTrace*> group;
      for (const auto& t : traces) group.push_back(&t);
      cfg.seed = s;
      const FitResult r = fit_3ppe_condition(group, cfg, nullptr);
      bool ok = r.converged;
      for (int i = 0; i < 4; ++i) {
        const bool in = std::abs(r.params.values[idx[i]] - truth[i]) <= 3.0 * tol[i];
        per[i] += in;
        ok = ok && in;
      }
      all_ok += ok;
    }
    return Outcome{all_ok >= 45, format("%d/50 trials with Gamma0, Gamma_TLS, Gamma_SD, R_SD all within "
                                        "3 sigma_quoted (need 45); per parameter %d/%d/%d/%d",
                                        all_ok, per[0], per[1], per[2], per[3])};
  });

  criterion(9, "three-level limits", 0, [] {
    double gap = 0.0;
    for (double t = 0.05; t <= 7.5 + 1e-9; t += 0.05)
      for (double rel : {1e-7, -1e-7}) {
        const double limit = three_level_population_factor({1.0, 9.0_ms, 9.0_ms, 0.5}, Duration::milliseconds(t));
        const double off = three_level_population_factor({1.0, 9.0_ms, Duration::milliseconds(9.0 * (1 + rel)), 0.5},
                                                         Duration::milliseconds(t));
        gap = std::max(gap, std::abs(off - limit));
      }
    Rng rng(11);
    double reduction = 0.0;
    for (int i = 0; i < 200; ++i) {
      const ThreeLevelParams p{rng.uniform(0.1, 2.0), Duration::milliseconds(rng.uniform(1.0, 20.0)), 2.0_s, 0.0};
      const SpectralDiffusionParams sd{Frequency::kilohertz(rng.uniform(1.0, 20.0)), 0.0_kHz, 1.0_kHz, 0.0_kHz,
                                       50.0_us};
      const Duration t12 = Duration::microseconds(rng.uniform(0.0, 3.0));
      const Duration t23 = Duration::microseconds(rng.uniform(50.0, 1e4));
      const double two_level =
          p.i0 * std::exp(-2.0 * t23.ms() / p.t1.ms()) * std::exp(-4.0 * kPi * t12.ms() * sd.gamma0.khz());
      reduction = std::max(reduction, std::abs(stimulated_echo_intensity(p, sd, t12, t23) / two_level - 1.0));
    }
    return Outcome{gap < 1e-8 && reduction <= 1e-12,
                   format("continuity gap %.3g, two-level reduction %.3g relative", gap, reduction)};
  });

  criterion(10, "uncertainty calibration", 0, [] {
    int covered = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      const FitResult r = mims_trial(0.02, 9000 + s);
      covered += std::abs(r.params.values[MimsModel::phase_memory] - kTrueTm) <=
                 r.standard_errors[MimsModel::phase_memory];
    }
    const double frac = covered / 200.0;
    return Outcome{frac >= 0.62 && frac <= 0.75, format("T_M 1-sigma coverage %.1f%% (%d/200)", 100 * frac, covered)};
  });

  criterion(11, "demo determinism", 0, [] {
    const fs::path root = fs::temp_directory_path() / "echofit_acceptance";
    fs::remove_all(root);
    DemoOptions a;
    a.out_dir = root / "a";
    DemoOptions b = a;
    b.out_dir = root / "b";
    const DemoOutcome ra = run_demo(a);
    const DemoOutcome rb = run_demo(b);
    if (ra.files.size() != rb.files.size() || ra.files.empty()) return Outcome{false, "different file sets"};
    for (std::size_t i = 0; i < ra.files.size(); ++i) {
      const auto rel = fs::relative(ra.files[i], a.out_dir);
      if (rel != fs::relative(rb.files[i], b.out_dir) || slurp(ra.files[i]) != slurp(rb.files[i]))
        return Outcome{false, "differs at " + rel.string()};
    }
    return Outcome{ra.report.all_checks_passed(),
                   format("%zu files byte-identical; demo checks %s", ra.files.size(),
                          ra.report.all_checks_passed() ? "all passed" : "FAILED")};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
