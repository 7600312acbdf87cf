#pragma once

// Batch fitting of echo traces across experimental conditions and report
// emission.
//
// Config file: one "key = value" per line, '#' starts a comment.
//   seed = 1
//   restarts = 8
//   max_iterations = 1000
//   window_min_us = 0.25
//   window_max_us = inf
//   normalize = false
//   threads = 1
//   t1_ms = 9
//   free_t1 = false
//   default_tz_s = 1
//   tz = <field_T> <temperature_K> <seconds>     (repeatable)

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "echofit/catalog.hpp"
#include "echofit/data.hpp"
#include "echofit/error.hpp"
#include "echofit/fit.hpp"
#include "echofit/guess.hpp"
#include "echofit/models.hpp"

namespace echofit {

struct TzEntry {
  Condition condition;
  double seconds = 1.0;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int restarts = 8;
  int max_iterations = 1000;
  double window_min_us = 0.25;
  double window_max_us = std::numeric_limits<double>::infinity();
  bool normalize = false;
  int threads = 1;
  double t1_ms = 9.0;
  bool free_t1 = false;
  double default_tz_s = 1.0;
  std::vector<TzEntry> tz_table;

  void validate() const {
    if (restarts < 1) throw DataError("config: restarts must be >= 1");
    if (max_iterations < 1) throw DataError("config: max_iterations must be >= 1");
    if (!(window_max_us > window_min_us)) throw DataError("config: window_max_us must exceed window_min_us");
    if (threads < 1) throw DataError("config: threads must be >= 1");
    if (!(t1_ms > 0.0) || !(default_tz_s > 0.0)) throw DataError("config: lifetimes must be > 0");
    for (const TzEntry& e : tz_table)
      if (!(e.seconds > 0.0)) throw DataError("config: tz entries must be > 0 s");
  }

  /// T_Z in ms for a condition, and whether it fell back to the default.
  std::pair<double, bool> tz_ms(const Condition& c) const {
    for (const TzEntry& e : tz_table) {
      const bool same_b = std::abs(e.condition.field_T - c.field_T) <= 1e-9 * std::max(1.0, std::abs(c.field_T));
      const bool same_t = std::abs(e.condition.temperature_K - c.temperature_K) <= 1e-9 * std::max(1.0, c.temperature_K);
      if (same_b && same_t) return {e.seconds * 1e3, false};
    }
    return {default_tz_s * 1e3, true};
  }

  /// Resolved settings, one per line, in file syntax.
  std::string describe() const {
    std::ostringstream os;
    os << "seed = " << seed << "\n"
       << "restarts = " << restarts << "\n"
       << "max_iterations = " << max_iterations << "\n"
       << "window_min_us = " << detail::sig6(window_min_us) << "\n"
       << "window_max_us = " << detail::sig6(window_max_us) << "\n"
       << "normalize = " << (normalize ? "true" : "false") << "\n"
       << "threads = " << threads << "\n"
       << "t1_ms = " << detail::sig6(t1_ms) << "\n"
       << "free_t1 = " << (free_t1 ? "true" : "false") << "\n"
       << "default_tz_s = " << detail::sig6(default_tz_s) << "\n";
    for (const TzEntry& e : tz_table)
      os << "tz = " << detail::sig6(e.condition.field_T) << ' ' << detail::sig6(e.condition.temperature_K) << ' '
         << detail::sig6(e.seconds) << "\n";
    return os.str();
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DataError("config: " + key + " expects true or false, got '" + v + "'");
}

inline long long parse_integer(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used == v.size()) return n;
  } catch (...) {
  }
  throw DataError("config: " + key + " expects an integer, got '" + v + "'");
}

// splitmix64 finaliser
inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Per-condition restart seed. Depends only on the batch seed and the
// condition, so removing one trace never changes another trace's fit.
inline std::uint64_t condition_seed(std::uint64_t base, const Condition& c) {
  std::uint64_t h = mix(base);
  h = mix(h ^ std::bit_cast<std::uint64_t>(c.temperature_K));
  return mix(h ^ std::bit_cast<std::uint64_t>(c.field_T));
}

// Runs task(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline PipelineConfig parse_config(std::istream& in, const std::string& source = "config") {
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw DataError(where + "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    try {
      if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_integer(value, key));
      else if (key == "restarts") cfg.restarts = static_cast<int>(detail::parse_integer(value, key));
      else if (key == "max_iterations") cfg.max_iterations = static_cast<int>(detail::parse_integer(value, key));
      else if (key == "threads") cfg.threads = static_cast<int>(detail::parse_integer(value, key));
      else if (key == "window_min_us") cfg.window_min_us = detail::parse_double(value, key);
      else if (key == "window_max_us") cfg.window_max_us = detail::parse_double(value, key);
      else if (key == "normalize") cfg.normalize = detail::parse_bool(value, key);
      else if (key == "t1_ms") cfg.t1_ms = detail::parse_double(value, key);
      else if (key == "free_t1") cfg.free_t1 = detail::parse_bool(value, key);
      else if (key == "default_tz_s") cfg.default_tz_s = detail::parse_double(value, key);
      else if (key == "tz") {
        const auto f = detail::split_fields(value);
        if (f.size() != 3) throw DataError("tz expects '<field_T> <temperature_K> <seconds>'");
        cfg.tz_table.push_back({{detail::parse_double(f[1], "temperature"), detail::parse_double(f[0], "field")},
                                detail::parse_double(f[2], "tz")});
      } else {
        throw DataError("unknown key '" + key + "'");
      }
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_config(in, path.string());
}

/// Diagnostics of one fit within a batch.
struct FitRecord {
  std::string label;
  Condition condition;
  bool ok = false;
  std::string message;
  std::optional<FitResult> result;
};

struct BatchResult {
  std::vector<ScanTable> tables;
  std::vector<FitRecord> fits;

  const ScanTable& table(Quantity q) const {
    for (const ScanTable& t : tables)
      if (t.quantity == q) return t;
    throw std::out_of_range("batch has no " + std::string(to_string(q)) + " table");
  }
};

namespace detail {

// Field axis when every condition shares a temperature, otherwise temperature
// axis when every condition shares a field.
inline std::pair<ConditionAxis, double> scan_axis(const std::vector<Condition>& conds) {
  if (conds.empty()) throw DataError("batch: no traces");
  const bool same_t = std::all_of(conds.begin(), conds.end(),
                                  [&](const Condition& c) { return c.temperature_K == conds.front().temperature_K; });
  if (same_t) return {ConditionAxis::field, conds.front().temperature_K};
  const bool same_b =
      std::all_of(conds.begin(), conds.end(), [&](const Condition& c) { return c.field_T == conds.front().field_T; });
  if (same_b) return {ConditionAxis::temperature, conds.front().field_T};
  throw DataError("batch: traces vary in both field and temperature");
}

inline double axis_value(ConditionAxis axis, const Condition& c) {
  return axis == ConditionAxis::field ? c.field_T : c.temperature_K;
}

inline std::string condition_label(const Condition& c) {
  return "B=" + sig6(c.field_T) + " T, T=" + sig6(c.temperature_K) + " K";
}

inline std::string trace_label(const EchoTrace& t, std::size_t index) {
  return condition_label(t.condition) + " [" + (t.provenance.empty() ? "trace " + std::to_string(index) : t.provenance) +
         "]";
}

inline std::string flag_for(const FitResult& r) {
  return r.converged ? std::string(kFlagOk) : std::string(kFlagNotConverged);
}

inline ScanRow failed_row(double condition) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {condition, nan, nan, std::string(kFlagFailed)};
}

}  // namespace detail

/// Fit one two-pulse trace with the stretched-exponential decay. Throws on
/// invalid data or a failed fit.
inline FitResult fit_2ppe_trace(const EchoTrace& trace, const PipelineConfig& cfg) {
  trace.validate();
  if (trace.sequence != Sequence::two_pulse) throw DataError("expected a 2PPE trace");
  FitConfig fc = default_config(ModelId::mims);
  fc.window = FitWindow{cfg.window_min_us * 1e-3, cfg.window_max_us * 1e-3, 0};
  fc.restarts = cfg.restarts;
  fc.max_iterations = cfg.max_iterations;
  fc.seed = detail::condition_seed(cfg.seed, trace.condition);

  std::vector<Observation<1>> obs;
  double top = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!fc.window->contains(trace.times_ms[i])) continue;
    obs.push_back({{trace.times_ms[i]}, trace.intensity[i]});
    top = std::max(top, trace.intensity[i]);
  }
  if (obs.size() < 4) throw FitError("fewer than 4 points inside the fit window");
  if (cfg.normalize) {
    if (!(top > 0.0)) throw DataError("cannot normalise a trace without positive intensity");
    for (auto& o : obs) o.value /= top;
  }
  for (const auto& o : obs)
    if (!(o.value > 0.0)) throw DataError("non-positive intensity inside the fit window");
  const auto guess = initial_guess(MimsModel{}, std::span<const Observation<1>>(obs));
  if (guess.degenerate) throw FitError("no decay inside the fit window");
  return multi_start_fit(MimsModel{}, std::span<const Observation<1>>(obs), guess.params,
                         default_bounds(ModelId::mims), fc);
}

/// Per-trace 2PPE fits collected into Gamma_eff, I0 and x tables.
inline BatchResult batch_fit_2ppe(const std::vector<EchoTrace>& traces, const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<Condition> conds;
  for (const EchoTrace& t : traces) {
    if (t.sequence != Sequence::two_pulse) throw DataError("batch_fit_2ppe: all traces must be 2PPE");
    conds.push_back(t.condition);
  }
  const auto [axis, fixed] = detail::scan_axis(conds);

  std::vector<FitRecord> records(traces.size());
  detail::parallel_for(traces.size(), cfg.threads, [&](std::size_t i) {
    FitRecord& rec = records[i];
    rec.label = detail::trace_label(traces[i], i);
    rec.condition = traces[i].condition;
    try {
      rec.result = fit_2ppe_trace(traces[i], cfg);
      rec.ok = true;
      rec.message = rec.result->message;
    } catch (const std::exception& e) {
      rec.message = e.what();
    }
  });

  BatchResult out;
  ScanTable gamma{axis, Quantity::gamma_eff, fixed, {}};
  ScanTable i0{axis, Quantity::i0, fixed, {}};
  ScanTable x{axis, Quantity::mims_x, fixed, {}};
  for (const FitRecord& rec : records) {
    const double c = detail::axis_value(axis, rec.condition);
    if (!rec.ok) {
      gamma.rows.push_back(detail::failed_row(c));
      i0.rows.push_back(detail::failed_row(c));
      x.rows.push_back(detail::failed_row(c));
      continue;
    }
    const FitResult& r = *rec.result;
    const double tm = r.params.values[MimsModel::phase_memory];
    const double sigma_tm = r.standard_errors[MimsModel::phase_memory];
    const std::string flag = detail::flag_for(r);
    gamma.rows.push_back({c, gamma_eff_from_tm(Duration::milliseconds(tm)).khz(), sigma_tm / (kPi * tm * tm), flag});
    i0.rows.push_back({c, r.params.values[MimsModel::i0], r.standard_errors[MimsModel::i0], flag});
    x.rows.push_back({c, r.params.values[MimsModel::exponent], r.standard_errors[MimsModel::exponent], flag});
  }
  for (ScanTable* t : {&gamma, &i0, &x}) {
    t->sort_rows();
    out.tables.push_back(std::move(*t));
  }
  // Records follow the table order so the summary reads alongside it.
  std::stable_sort(records.begin(), records.end(), [axis](const FitRecord& a, const FitRecord& b) {
    return detail::axis_value(axis, a.condition) < detail::axis_value(axis, b.condition);
  });
  out.fits = std::move(records);
  return out;
}

/// Joint stimulated-echo fit of every t23 trace recorded at one condition.
/// T1 comes from the config (free when free_t1), T_Z from the tz table,
/// t0 is the shortest t23.
inline FitResult fit_3ppe_condition(const std::vector<const EchoTrace*>& traces, const PipelineConfig& cfg,
                                    bool* assumed_tz = nullptr) {
  using E = StimulatedEchoModel;
  if (traces.empty()) throw DataError("no traces for condition");
  std::vector<Observation<2>> obs;
  for (const EchoTrace* t : traces) {
    t->validate();
    if (t->sequence != Sequence::three_pulse_vs_t23)
      throw DataError("batch_fit_3ppe: traces must be 3PPE-vs-t23 with a recorded t12");
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (!(t->intensity[i] > 0.0)) throw DataError("non-positive echo intensity");
      obs.push_back({{t->fixed_delay_ms.value(), t->times_ms[i]}, t->intensity[i]});
    }
  }
  const Condition cond = traces.front()->condition;
  const auto [tz, assumed] = cfg.tz_ms(cond);
  if (assumed_tz) *assumed_tz = assumed;

  auto guess = initial_guess(E{}, std::span<const Observation<2>>(obs), EchoLifetimes{cfg.t1_ms, tz});
  auto bounds = default_bounds(ModelId::stimulated_echo);
  if (cfg.free_t1) bounds[E::t1] = ParamBound::positive();
  FitConfig fc = default_config(ModelId::stimulated_echo);
  fc.restarts = cfg.restarts;
  fc.max_iterations = cfg.max_iterations;
  fc.seed = detail::condition_seed(cfg.seed, cond);
  return multi_start_fit(E{}, std::span<const Observation<2>>(obs), guess.params, bounds, fc);
}

/// Three-pulse traces grouped by condition, one joint fit per condition,
/// collected into Gamma0, Gamma_TLS, Gamma_SD, R_SD and beta tables.
inline BatchResult batch_fit_3ppe(const std::vector<EchoTrace>& traces, const PipelineConfig& cfg) {
  using E = StimulatedEchoModel;
  cfg.validate();
  std::map<Condition, std::vector<const EchoTrace*>> groups;
  for (const EchoTrace& t : traces) {
    if (t.sequence != Sequence::three_pulse_vs_t23)
      throw DataError("batch_fit_3ppe: traces must be 3PPE-vs-t23 with a recorded t12");
    groups[t.condition].push_back(&t);
  }
  std::vector<Condition> conds;
  for (const auto& [c, g] : groups) conds.push_back(c);
  const auto [axis, fixed] = detail::scan_axis(conds);

  std::vector<FitRecord> records(conds.size());
  std::vector<bool> assumed(conds.size(), false);
  detail::parallel_for(conds.size(), cfg.threads, [&](std::size_t i) {
    FitRecord& rec = records[i];
    const auto& group = groups.at(conds[i]);
    rec.condition = conds[i];
    rec.label = detail::condition_label(conds[i]) + " [" + std::to_string(group.size()) + " traces]";
    try {
      bool a = false;
      rec.result = fit_3ppe_condition(group, cfg, &a);
      assumed[i] = a;
      rec.ok = true;
      rec.message = rec.result->message;
    } catch (const std::exception& e) {
      rec.message = e.what();
    }
  });

  const std::pair<Quantity, std::size_t> columns[] = {{Quantity::gamma0, E::gamma0},
                                                      {Quantity::gamma_tls, E::gamma_tls},
                                                      {Quantity::gamma_sd, E::gamma_sd},
                                                      {Quantity::rate_sd, E::rate_sd},
                                                      {Quantity::beta, E::beta}};
  BatchResult out;
  for (const auto& [q, idx] : columns) {
    ScanTable t{axis, q, fixed, {}};
    for (std::size_t i = 0; i < records.size(); ++i) {
      const double c = detail::axis_value(axis, records[i].condition);
      if (!records[i].ok) {
        t.rows.push_back(detail::failed_row(c));
        continue;
      }
      const FitResult& r = *records[i].result;
      std::string flag = detail::flag_for(r);
      if (flag == kFlagOk && assumed[i]) flag = kFlagAssumedTz;
      t.rows.push_back({c, r.params.values[idx], r.standard_errors[idx], flag});
    }
    t.sort_rows();
    out.tables.push_back(std::move(t));
  }
  out.fits = std::move(records);
  return out;
}

/// Fit a linewidth-versus-condition model (field, temperature or sech2) to a
/// table, weighting rows by their standard errors when present.
inline FitResult fit_scan(ModelId id, const ScanTable& table, int restarts, std::uint64_t seed, bool use_errors = true) {
  if (id != ModelId::field && id != ModelId::temperature && id != ModelId::sech2)
    throw std::invalid_argument("fit_scan: model " + std::string(to_string(id)) + " is not a scan model");
  if ((id == ModelId::field || id == ModelId::sech2) && table.axis != ConditionAxis::field)
    throw DataError("fit_scan: " + std::string(to_string(id)) + " needs a field-axis table");
  if (id == ModelId::temperature && table.axis != ConditionAxis::temperature)
    throw DataError("fit_scan: temperature model needs a temperature-axis table");
  Dataset d = table.to_dataset(use_errors);
  // Rows without an error estimate fall back to relative weighting.
  if (std::any_of(d.sigmas.begin(), d.sigmas.end(), [](double s) { return !(s > 0.0) || !std::isfinite(s); }))
    d.sigmas.clear();
  FitConfig fc = default_config(id);
  fc.restarts = restarts;
  fc.seed = seed;
  const ModelParams init = initial_guess(id, d);
  return fit(id, d, init, default_bounds(id), fc);
}

// ---------------------------------------------------------------------------
// Report

struct ReportCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::string title = "echo fit report";
  std::string configuration;  // free text, printed verbatim
  std::vector<ScanTable> tables;
  std::vector<FitRecord> fits;
  std::optional<FieldMinimum> field_minimum;
  std::vector<std::string> notes;  // extra summary lines, printed verbatim
  std::vector<ReportCheck> checks;

  bool all_checks_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ReportCheck& c) { return c.passed; });
  }
};

inline std::string format_summary(const Report& report) {
  using detail::sig6;
  std::ostringstream os;
  os << report.title << "\n\n";
  if (!report.configuration.empty()) os << "[configuration]\n" << report.configuration << "\n";
  os << "[tables]\n";
  for (const ScanTable& t : report.tables) {
    std::size_t usable = 0;
    for (const ScanRow& r : t.rows) usable += r.ok() ? 1 : 0;
    os << t.file_stem() << ".csv  rows=" << t.rows.size() << " usable=" << usable << "\n";
  }
  os << "\n[fits]\n";
  for (const FitRecord& f : report.fits) {
    os << f.label << ": ";
    if (!f.ok || !f.result) {
      os << "FAILED (" << f.message << ")\n";
      continue;
    }
    const FitResult& r = *f.result;
    os << (r.converged ? "converged" : "NOT CONVERGED") << " iterations=" << r.iterations << " sse=" << sig6(r.sse)
       << " points=" << r.points << " dof=" << r.dof << " restarts_agreeing=" << r.restarts_agreeing;
    if (r.ordering_violation) os << " ordering-violation";
    os << "\n";
    const auto specs = param_specs(r.params.model);
    for (std::size_t i = 0; i < specs.size(); ++i) {
      os << "  " << specs[i].name << " = " << sig6(r.params.values[i]);
      if (r.is_free(i))
        os << " +- " << sig6(r.standard_errors[i]);
      else
        os << " (fixed)";
      os << ' ' << specs[i].unit << "\n";
    }
  }
  if (report.field_minimum) {
    const FieldMinimum& m = *report.field_minimum;
    const char* where = m.location == MinimumLocation::interior         ? "interior"
                        : m.location == MinimumLocation::lower_boundary ? "lower-boundary"
                                                                        : "upper-boundary";
    os << "\n[field-minimum]\nB* = " << sig6(m.field_T) << " T\nGamma* = " << sig6(m.linewidth.khz())
       << " kHz\nlocation = " << where << "\n";
  }
  if (!report.notes.empty()) {
    os << "\n";
    for (const std::string& n : report.notes) os << n << "\n";
  }
  if (!report.checks.empty()) {
    os << "\n[checks]\n";
    for (const ReportCheck& c : report.checks)
      os << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
  }
  return os.str();
}

/// Writes one CSV per table plus summary.txt into `dir`. Everything is
/// formatted before the first file is opened, so invalid input leaves no
/// partial output. Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const Report& report, const std::filesystem::path& dir) {
  if (report.tables.empty()) throw DataError("emit_report: no tables to write");
  std::vector<std::pair<std::filesystem::path, std::string>> files;
  for (const ScanTable& t : report.tables) {
    if (t.rows.empty()) throw DataError("emit_report: table " + t.file_stem() + " has no rows");
    const auto path = dir / (t.file_stem() + ".csv");
    for (const auto& [p, text] : files)
      if (p == path) throw DataError("emit_report: duplicate table " + t.file_stem());
    files.emplace_back(path, format_table(t));
  }
  files.emplace_back(dir / "summary.txt", format_summary(report));

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& [path, text] : files) {
    auto out = detail::open_for_write(path);
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
    written.push_back(path);
  }
  return written;
}

}  // namespace echofit
