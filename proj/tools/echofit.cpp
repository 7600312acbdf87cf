// echofit command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "echofit/echofit.hpp"

namespace fs = std::filesystem;
using namespace echofit;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) { return detail::sig6(v); }

fs::path default_out(const std::string& fallback) {
  const char* env = std::getenv("ECHOFIT_OUT");
  return env && *env ? fs::path(env) : fs::path(fallback);
}

// Every run starts by echoing its resolved settings as comment lines.
class Resolved {
 public:
  Resolved& set(std::string key, std::string value) {
    items_.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  Resolved& set(std::string key, double value) { return set(std::move(key), fmt(value)); }
  void print() const {
    for (const auto& [k, v] : items_) std::cout << "# " << k << ": " << v << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

// -- presets -----------------------------------------------------------------

constexpr const char* kPresetField = "field-7mK";
constexpr const char* kPreset3ppe = "echo-7mK-0.09T";
constexpr const char* kPresetTemp = "illustrative-temp-0.09T";

std::optional<std::vector<double>> preset_values(ModelId id, const std::string& name) {
  const auto echo = presets::echo_7mK_009T();
  if (name == kPresetField && id == ModelId::field) return to_model_params(presets::field_7mK()).values;
  if (name == kPresetTemp && id == ModelId::temperature)
    return to_model_params(presets::illustrative_temp_009T()).values;
  if (name == kPreset3ppe) {
    switch (id) {
      case ModelId::stimulated_echo: return to_model_params(echo.three_level, echo.diffusion).values;
      case ModelId::spectral_diffusion: return to_model_params(echo.diffusion).values;
      case ModelId::population:
        return std::vector<double>{echo.three_level.beta, echo.three_level.t1.ms(), echo.three_level.tz.ms()};
      default: break;
    }
  }
  return std::nullopt;
}

std::string default_preset(ModelId id) {
  switch (id) {
    case ModelId::field: return kPresetField;
    case ModelId::temperature: return kPresetTemp;
    case ModelId::spectral_diffusion:
    case ModelId::population:
    case ModelId::stimulated_echo: return kPreset3ppe;
    default: return "";
  }
}

// Parameters from --params when given, else from the named or default preset.
std::vector<double> resolve_params(ModelId id, const std::vector<double>& params, std::string& preset) {
  if (!params.empty()) {
    if (params.size() != param_count(id))
      throw UsageError("--params: " + std::string(to_string(id)) + " takes " + std::to_string(param_count(id)) +
                       " values");
    preset = "(--params)";
    return params;
  }
  if (preset.empty()) preset = default_preset(id);
  if (preset.empty()) throw UsageError(std::string(to_string(id)) + " has no preset; pass --params");
  auto v = preset_values(id, preset);
  if (!v) throw UsageError("preset '" + preset + "' does not apply to model " + std::string(to_string(id)));
  return *v;
}

std::string param_layout(ModelId id) {
  std::string s;
  for (const auto& p : param_specs(id)) s += (s.empty() ? "" : ",") + std::string(p.name) + "[" + std::string(p.unit) + "]";
  return s;
}

void print_fit(const FitResult& r) {
  const auto specs = param_specs(r.params.model);
  std::cout << (r.converged ? "converged" : "NOT CONVERGED") << " after " << r.iterations
            << " iterations, sse = " << fmt(r.sse) << ", dof = " << r.dof << "\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::cout << specs[i].name << " = " << fmt(r.params.values[i]);
    if (r.is_free(i)) std::cout << " +- " << fmt(r.standard_errors[i]);
    std::cout << " " << specs[i].unit << "\n";
  }
}

// -- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string preset;
  std::vector<double> params;
  std::optional<double> field_T, temperature_K, t12_us, t23_us, tm_us, gamma_khz;
  double bmax = 2.0;
};

double need(const std::optional<double>& v, const char* flag) {
  if (!v) throw UsageError(std::string("missing ") + flag);
  return *v;
}

int run_eval(const EvalArgs& a) {
  Resolved cfg;
  cfg.set("command", "eval").set("model", a.model);
  if (a.model == "gamma-eff") {
    const double tm = need(a.tm_us, "--tm-us");
    cfg.set("T_M_us", tm).print();
    std::cout << "Gamma_eff = " << fmt(gamma_eff_from_tm(Duration::microseconds(tm)).khz()) << " kHz\n";
    return 0;
  }
  if (a.model == "tm") {
    const double g = need(a.gamma_khz, "--gamma-khz");
    cfg.set("Gamma_eff_kHz", g).print();
    std::cout << "T_M = " << fmt(tm_from_gamma_eff(Frequency::kilohertz(g)).us()) << " us\n";
    return 0;
  }
  if (a.model == "field-min") {
    std::string preset = a.preset;
    const auto p = resolve_params(ModelId::field, a.params, preset);
    const double t = a.temperature_K.value_or(presets::kBaseTemperatureK);
    cfg.set("params", preset + " " + join(p)).set("T_K", t).set("B_max_T", a.bmax).print();
    const FieldMinimum m = field_linewidth_minimum(field_params({ModelId::field, p}), t, a.bmax);
    std::cout << "B* = " << fmt(m.field_T) << " T\n"
              << "Gamma* = " << fmt(m.linewidth.khz()) << " kHz\n"
              << "location = "
              << (m.location == MinimumLocation::interior         ? "interior"
                  : m.location == MinimumLocation::lower_boundary ? "lower-boundary"
                                                                  : "upper-boundary")
              << "\n";
    return 0;
  }

  const ModelId id = model_from_string(a.model == "temp" ? "temperature" : a.model == "sd" ? "spectral-diffusion"
                                                                         : a.model == "echo" ? "stimulated-echo"
                                                                                             : a.model);
  std::string preset = a.preset;
  const auto p = resolve_params(id, a.params, preset);
  cfg.set("params", preset + " " + join(p)).set("layout", param_layout(id));
  std::vector<double> in;
  std::string quantity = "Gamma_eff";
  std::string unit = "kHz";
  switch (id) {
    case ModelId::mims:
      in = {need(a.t12_us, "--t12-us") * 1e-3};
      quantity = "I";
      unit = "(arb.)";
      break;
    case ModelId::field:
    case ModelId::sech2:
      in = {need(a.field_T, "--B"), a.temperature_K.value_or(presets::kBaseTemperatureK)};
      if (id == ModelId::sech2) quantity = "Gamma_SD";
      break;
    case ModelId::temperature: in = {need(a.temperature_K, "--T")}; break;
    case ModelId::spectral_diffusion: in = {a.t12_us.value_or(0.0) * 1e-3, need(a.t23_us, "--t23-us") * 1e-3}; break;
    case ModelId::population:
      in = {need(a.t23_us, "--t23-us") * 1e-3};
      quantity = "F";
      unit = "";
      break;
    case ModelId::stimulated_echo:
      in = {need(a.t12_us, "--t12-us") * 1e-3, need(a.t23_us, "--t23-us") * 1e-3};
      quantity = "I";
      unit = "(arb.)";
      break;
  }
  const auto names = input_names(id);
  for (std::size_t i = 0; i < in.size(); ++i) cfg.set(std::string(names[i]), in[i]);
  cfg.print();
  const double v = model_value(id, p, in);
  std::cout << quantity << " = " << fmt(v) << (unit.empty() ? "" : " " + unit) << "\n";
  return 0;
}

// -- synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string model = "mims";
  std::string preset;
  std::vector<double> params;
  double min = 0.0, max = 0.0;
  std::size_t count = 50;
  bool log_grid = false;
  std::string sweep = "t23";
  std::optional<double> t12_us, t23_us;
  double field_T = presets::kOptimalFieldT;
  double temperature_K = presets::kBaseTemperatureK;
  double noise = 0.0;
  std::string noise_kind = "multiplicative";
  std::uint64_t seed = 0;
  bool modulation = false;
  std::string out;
  std::string unit = "us";
};

int run_synth(const SynthArgs& a) {
  const ModelId id = model_from_string(a.model);
  std::string preset = a.preset;
  SynthSpec s;
  s.truth = {id, resolve_params(id, a.params, preset)};
  s.seed = a.seed;
  s.condition = {a.temperature_K, a.field_T};
  if (a.noise > 0.0)
    s.noise = a.noise_kind == "additive" ? Noise::additive(a.noise) : Noise::multiplicative(a.noise);
  if (a.modulation) s.modulation = Modulation{};

  // Grid bounds are given in microseconds for delays, tesla or kelvin for scans.
  bool trace = false;
  double to_base = 1.0;
  switch (id) {
    case ModelId::mims: trace = true; to_base = 1e-3; break;
    case ModelId::stimulated_echo:
      trace = true;
      to_base = 1e-3;
      if (a.sweep == "t23") {
        s.axis = 1;
        s.fixed_inputs = {need(a.t12_us, "--t12-us") * 1e-3, 0.0};
      } else {
        s.axis = 0;
        s.fixed_inputs = {0.0, need(a.t23_us, "--t23-us") * 1e-3};
      }
      break;
    case ModelId::field:
    case ModelId::sech2: s.fixed_inputs = {0.0, a.temperature_K}; break;
    case ModelId::temperature: break;
    default: throw UsageError("synth supports mims, stimulated-echo, field, temperature and sech2");
  }
  if (!(a.max > a.min)) throw UsageError("--max must exceed --min");
  s.grid = a.log_grid ? Grid::logarithmic(a.min * to_base, a.max * to_base, a.count)
                      : Grid::linear(a.min * to_base, a.max * to_base, a.count);

  Resolved cfg;
  cfg.set("command", "synth").set("model", a.model).set("params", preset + " " + join(s.truth.values));
  cfg.set("grid", std::string(a.log_grid ? "log " : "linear ") + fmt(a.min) + " .. " + fmt(a.max) + " x " +
                      std::to_string(a.count));
  cfg.set("noise", a.noise_kind + " " + fmt(a.noise)).set("seed", std::to_string(a.seed));
  cfg.set("modulation", a.modulation ? "on" : "off").set("T_K", a.temperature_K).set("B_T", a.field_T);
  cfg.set("out", a.out.empty() ? "stdout" : a.out).print();

  const std::string text = trace ? format_trace(synth_trace(s), a.unit) : format_table(synth_scan(s));
  if (a.out.empty()) {
    std::cout << text;
  } else {
    auto f = detail::open_for_write(a.out);
    f << text;
    if (!f) throw DataError("failed writing " + a.out);
  }
  return 0;
}

// -- batch fits ----------------------------------------------------------------

struct BatchArgs {
  std::vector<std::string> inputs;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> restarts, threads;
  bool normalize = false;
  std::optional<double> t1_ms;
  bool free_t1 = false;
  bool field_model = false;
  std::string out;
};

PipelineConfig batch_config(const BatchArgs& a) {
  PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.restarts) cfg.restarts = *a.restarts;
  if (a.threads) cfg.threads = *a.threads;
  if (a.normalize) cfg.normalize = true;
  if (a.t1_ms) cfg.t1_ms = *a.t1_ms;
  if (a.free_t1) cfg.free_t1 = true;
  cfg.validate();
  return cfg;
}

int finish_report(Report& report, const fs::path& out) {
  const auto files = emit_report(report, out);
  std::cout << format_summary(report);
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  const bool any_ok = std::any_of(report.fits.begin(), report.fits.end(), [](const FitRecord& r) { return r.ok; });
  return any_ok ? 0 : 1;
}

int run_batch(const BatchArgs& a, bool three_pulse) {
  const PipelineConfig cfg = batch_config(a);
  const fs::path out = a.out.empty() ? default_out("echofit-out") : fs::path(a.out);
  Resolved r;
  r.set("command", three_pulse ? "fit-3ppe" : "fit-2ppe").set("inputs", std::to_string(a.inputs.size()) + " traces");
  r.set("out", out.string()).print();
  std::istringstream lines(cfg.describe());
  for (std::string line; std::getline(lines, line);) std::cout << "# " << line << "\n";

  std::vector<EchoTrace> traces;
  for (const auto& p : a.inputs) traces.push_back(load_trace(p));
  BatchResult b = three_pulse ? batch_fit_3ppe(traces, cfg) : batch_fit_2ppe(traces, cfg);

  Report report;
  report.title = three_pulse ? "three-pulse batch fit" : "two-pulse batch fit";
  report.configuration = cfg.describe();
  report.tables = std::move(b.tables);
  report.fits = std::move(b.fits);
  if (a.field_model) {
    const ScanTable& g = report.tables.front();
    if (three_pulse || g.axis != ConditionAxis::field) throw UsageError("--field-model needs a 2PPE field scan");
    const FitResult f = fit_scan(ModelId::field, g, cfg.restarts, cfg.seed);
    double bmax = 0.0;
    for (const ScanRow& row : g.rows) bmax = std::max(bmax, row.condition);
    report.field_minimum = field_linewidth_minimum(field_params(f.params), g.fixed_condition, bmax);
    report.fits.push_back({"field model vs Gamma_eff(B)", {g.fixed_condition, 0.0}, true, f.message, f});
  }
  return finish_report(report, out);
}

// -- scans ---------------------------------------------------------------------

struct ScanArgs {
  std::string input;
  std::string preset;
  std::vector<double> params;
  double lo = 0.0, hi = 0.0;
  std::size_t count = 201;
  double other = 0.0;  // fixed T for field scans, fixed B for temperature scans
  int restarts = 8;
  std::uint64_t seed = 0;
  std::string out;
};

int run_scan(const ScanArgs& a, bool field) {
  const ModelId id = field ? ModelId::field : ModelId::temperature;
  Resolved cfg;
  cfg.set("command", field ? "scan-field" : "scan-temp");
  if (!a.input.empty()) {
    // Fit mode.
    const ScanTable t = load_table(a.input);
    cfg.set("input", a.input).set("restarts", std::to_string(a.restarts)).set("seed", std::to_string(a.seed)).print();
    const FitResult r = fit_scan(id, t, a.restarts, a.seed);
    print_fit(r);
    if (field) {
      double bmax = 0.0;
      for (const ScanRow& row : t.rows) bmax = std::max(bmax, row.condition);
      const FieldMinimum m = field_linewidth_minimum(field_params(r.params), t.fixed_condition, bmax);
      std::cout << "B* = " << fmt(m.field_T) << " T\nGamma* = " << fmt(m.linewidth.khz()) << " kHz\n";
    }
    return r.converged ? 0 : 1;
  }
  // Evaluate mode.
  std::string preset = a.preset;
  const auto p = resolve_params(id, a.params, preset);
  if (!(a.hi > a.lo) || a.count < 2) throw UsageError("need --max > --min and --count >= 2");
  cfg.set("params", preset + " " + join(p)).set(field ? "T_K" : "B_T", a.other);
  cfg.set("range", fmt(a.lo) + " .. " + fmt(a.hi) + " x " + std::to_string(a.count));
  cfg.set("out", a.out.empty() ? "stdout" : a.out).print();
  SynthSpec s;
  s.truth = {id, p};
  s.grid = field ? Grid::linear(a.lo, a.hi, a.count) : Grid::logarithmic(a.lo, a.hi, a.count);
  if (field) s.fixed_inputs = {0.0, a.other};
  s.condition = field ? Condition{a.other, 0.0} : Condition{presets::kBaseTemperatureK, a.other};
  const std::string text = format_table(synth_scan(s));
  if (a.out.empty()) {
    std::cout << text;
  } else {
    auto f = detail::open_for_write(a.out);
    f << text;
  }
  if (field) {
    const FieldMinimum m = field_linewidth_minimum(field_params({id, p}), a.other, a.hi);
    std::cout << "# B*: " << fmt(m.field_T) << " T\n# Gamma*: " << fmt(m.linewidth.khz()) << " kHz\n";
  }
  return 0;
}

// -- check-grad / demo -----------------------------------------------------------

int run_check_grad(bool all, const std::string& model, std::uint64_t seed, std::size_t draws) {
  if (!all && model.empty()) throw UsageError("pass --all or --model");
  std::vector<ModelId> ids;
  if (all)
    ids.assign(kAllModels.begin(), kAllModels.end());
  else
    ids.push_back(model_from_string(model));
  Resolved cfg;
  cfg.set("command", "check-grad").set("models", all ? "all" : model).set("seed", std::to_string(seed));
  cfg.set("draws", std::to_string(draws)).set("tolerance", 1e-5).print();
  Rng rng(seed);
  double worst = 0.0;
  for (ModelId id : ids) {
    const double e = max_gradient_error(id, draws, rng);
    worst = std::max(worst, e);
    std::cout << to_string(id) << " max_rel_error = " << fmt(e) << "\n";
  }
  std::cout << "overall max_rel_error = " << fmt(worst) << (worst < 1e-5 ? " PASS" : " FAIL") << "\n";
  return worst < 1e-5 ? 0 : 1;
}

int run_demo_cmd(std::uint64_t seed, const std::string& out, int threads) {
  DemoOptions opt;
  opt.seed = seed;
  opt.out_dir = out.empty() ? default_out("echofit-demo") : fs::path(out);
  opt.threads = threads;
  Resolved cfg;
  cfg.set("command", "demo").set("seed", std::to_string(seed)).set("out", opt.out_dir.string());
  cfg.set("threads", std::to_string(threads)).print();
  const DemoOutcome r = run_demo(opt);
  std::cout << format_summary(r.report);
  std::cout << "wrote " << r.files.size() << " files under " << opt.out_dir.string() << "\n";
  return r.report.all_checks_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-echo decoherence analysis: model evaluation, synthesis and fitting"};
  app.require_subcommand(1);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a model at one point");
  eval->add_option("model", ev.model, "mims | gamma-eff | tm | field | field-min | temp | sd | population | echo | sech2")
      ->required()
      ->check(CLI::IsMember(
          {"mims", "gamma-eff", "tm", "field", "field-min", "temp", "sd", "population", "echo", "sech2"}));
  eval->add_option("--preset", ev.preset, "Named parameter set")
      ->check(CLI::IsMember({kPresetField, kPreset3ppe, kPresetTemp}));
  eval->add_option("--params", ev.params, "Comma-separated parameters in model units (ms, kHz)")->delimiter(',');
  eval->add_option("--B", ev.field_T, "Field [T]");
  eval->add_option("--T", ev.temperature_K, "Temperature [K] (default 0.007)");
  eval->add_option("--t12-us", ev.t12_us, "Pulse separation t12 [us]");
  eval->add_option("--t23-us", ev.t23_us, "Waiting time t23 [us]");
  eval->add_option("--tm-us", ev.tm_us, "Phase-memory time [us]");
  eval->add_option("--gamma-khz", ev.gamma_khz, "Effective linewidth [kHz]");
  eval->add_option("--bmax", ev.bmax, "Upper field for field-min [T]")->capture_default_str();

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic trace or scan table");
  synth->add_option("--model", sy.model, "mims | stimulated-echo | field | temperature | sech2")->capture_default_str();
  synth->add_option("--preset", sy.preset, "Named parameter set")
      ->check(CLI::IsMember({kPresetField, kPreset3ppe, kPresetTemp}));
  synth->add_option("--params", sy.params, "Comma-separated parameters in model units")->delimiter(',');
  synth->add_option("--min", sy.min, "Grid start (us for delays, T or K for scans)")->required();
  synth->add_option("--max", sy.max, "Grid end")->required();
  synth->add_option("--count", sy.count, "Grid points")->capture_default_str()->check(CLI::Range(2, 1000000));
  synth->add_flag("--log", sy.log_grid, "Logarithmic grid");
  synth->add_option("--sweep", sy.sweep, "Swept delay of stimulated-echo traces")
      ->check(CLI::IsMember({"t12", "t23"}))
      ->capture_default_str();
  synth->add_option("--t12-us", sy.t12_us, "Fixed t12 [us] for t23 sweeps");
  synth->add_option("--t23-us", sy.t23_us, "Fixed t23 [us] for t12 sweeps");
  synth->add_option("--B", sy.field_T, "Field [T]")->capture_default_str();
  synth->add_option("--T", sy.temperature_K, "Temperature [K]")->capture_default_str();
  synth->add_option("--noise", sy.noise, "Noise level (relative or absolute)")->check(CLI::NonNegativeNumber);
  synth->add_option("--noise-kind", sy.noise_kind)->check(CLI::IsMember({"multiplicative", "additive"}));
  synth->add_option("--seed", sy.seed)->capture_default_str();
  synth->add_flag("--modulation", sy.modulation, "Apply the damped-cosine modulation (mims only)");
  synth->add_option("--unit", sy.unit, "Time unit written to trace files")
      ->check(CLI::IsMember({"ns", "us", "ms", "s"}))
      ->capture_default_str();
  synth->add_option("--out", sy.out, "Output file (default stdout)");

  BatchArgs b2, b3;
  auto add_batch = [](CLI::App* sub, BatchArgs& a) {
    sub->add_option("traces", a.inputs, "Trace files")->required()->check(CLI::ExistingFile);
    sub->add_option("--config", a.config, "Pipeline config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed);
    sub->add_option("--restarts", a.restarts)->check(CLI::PositiveNumber);
    sub->add_option("--threads", a.threads)->check(CLI::PositiveNumber);
    sub->add_option("--out", a.out, "Report directory (default $ECHOFIT_OUT or ./echofit-out)");
  };
  auto* fit2 = app.add_subcommand("fit-2ppe", "Batch-fit two-pulse traces");
  add_batch(fit2, b2);
  fit2->add_flag("--normalize", b2.normalize, "Normalise traces to their in-window maximum");
  fit2->add_flag("--field-model", b2.field_model, "Also fit the field model and report its minimum");
  auto* fit3 = app.add_subcommand("fit-3ppe", "Joint-fit three-pulse traces per condition");
  add_batch(fit3, b3);
  fit3->add_option("--t1-ms", b3.t1_ms, "Optical lifetime T1 [ms]");
  fit3->add_flag("--free-t1", b3.free_t1, "Fit T1 instead of fixing it");

  ScanArgs sf, st;
  sf.lo = 0.0;
  sf.hi = 2.0;
  sf.other = presets::kBaseTemperatureK;
  st.lo = presets::kBaseTemperatureK;
  st.hi = 0.55;
  st.count = 41;
  st.other = presets::kOptimalFieldT;
  auto add_scan = [](CLI::App* sub, ScanArgs& a, const char* other_flag, const char* other_help) {
    sub->add_option("--input", a.input, "Table to fit instead of evaluating")->check(CLI::ExistingFile);
    sub->add_option("--preset", a.preset, "Named parameter set")
        ->check(CLI::IsMember({kPresetField, kPreset3ppe, kPresetTemp}));
    sub->add_option("--params", a.params, "Comma-separated parameters")->delimiter(',');
    sub->add_option("--min", a.lo)->capture_default_str();
    sub->add_option("--max", a.hi)->capture_default_str();
    sub->add_option("--count", a.count)->capture_default_str();
    sub->add_option(other_flag, a.other, other_help)->capture_default_str();
    sub->add_option("--restarts", a.restarts)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seed", a.seed)->capture_default_str();
    sub->add_option("--out", a.out, "Output table file (default stdout)");
  };
  auto* scan_f = app.add_subcommand("scan-field", "Evaluate or fit linewidth versus field");
  add_scan(scan_f, sf, "--T", "Temperature [K]");
  auto* scan_t = app.add_subcommand("scan-temp", "Evaluate or fit linewidth versus temperature");
  add_scan(scan_t, st, "--B", "Field [T] recorded with the table");

  bool grad_all = false;
  std::string grad_model;
  std::uint64_t grad_seed = 7;
  std::size_t grad_draws = 100;
  auto* grad = app.add_subcommand("check-grad", "Compare analytic gradients with finite differences");
  grad->add_flag("--all", grad_all, "Every catalogued model");
  grad->add_option("--model", grad_model);
  grad->add_option("--seed", grad_seed)->capture_default_str();
  grad->add_option("--draws", grad_draws)->capture_default_str()->check(CLI::PositiveNumber);

  std::uint64_t demo_seed = 1;
  std::string demo_out;
  int demo_threads = 1;
  auto* demo = app.add_subcommand("demo", "Synthesise, fit and report the reference datasets");
  demo->add_option("--seed", demo_seed)->capture_default_str();
  demo->add_option("--out", demo_out, "Report directory (default $ECHOFIT_OUT or ./echofit-demo)");
  demo->add_option("--threads", demo_threads)->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*eval) return run_eval(ev);
    if (*synth) return run_synth(sy);
    if (*fit2) return run_batch(b2, false);
    if (*fit3) return run_batch(b3, true);
    if (*scan_f) return run_scan(sf, true);
    if (*scan_t) return run_scan(st, false);
    if (*grad) return run_check_grad(grad_all, grad_model, grad_seed, grad_draws);
    if (*demo) return run_demo_cmd(demo_seed, demo_out, demo_threads);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
