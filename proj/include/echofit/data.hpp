#pragma once

// Echo traces and derived-quantity tables, plus their text file formats.
//
// Trace file:
//   # unit-time: <ns|us|ms|s>
//   # sequence: <2PPE|3PPE-vs-t23|3PPE-vs-t12>
//   # temperature_K: <value>
//   # field_T: <value>
//   # t12: <value>              (3PPE-vs-t23 only, in unit-time)
//   # t23: <value>              (3PPE-vs-t12 only, in unit-time)
//   # provenance: <text>        (optional)
//   # seed: <integer>           (optional)
//   # truth: <model> <p1> ...   (optional, base units)
//   <time> <intensity>          (whitespace or comma separated)
//
// Table file:
//   # axis: <field|temperature>
//   # quantity: <gamma_eff|i0|x|gamma0|gamma_tls|gamma_sd|rate_sd|beta>
//   # unit: <text>
//   # fixed_temperature_K: <value>   or   # fixed_field_T: <value>
//   condition,value,stderr,flag
//   ...

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "echofit/catalog.hpp"
#include "echofit/error.hpp"
#include "echofit/fit.hpp"

namespace echofit {

enum class Sequence { two_pulse, three_pulse_vs_t23, three_pulse_vs_t12 };

inline std::string_view to_string(Sequence s) {
  switch (s) {
    case Sequence::two_pulse: return "2PPE";
    case Sequence::three_pulse_vs_t23: return "3PPE-vs-t23";
    case Sequence::three_pulse_vs_t12: return "3PPE-vs-t12";
  }
  return "?";
}

inline Sequence sequence_from_string(std::string_view s) {
  for (Sequence q : {Sequence::two_pulse, Sequence::three_pulse_vs_t23, Sequence::three_pulse_vs_t12})
    if (to_string(q) == s) return q;
  throw DataError("unknown sequence '" + std::string(s) + "'");
}

struct Condition {
  double temperature_K = 0.0;
  double field_T = 0.0;
  friend bool operator==(const Condition&, const Condition&) = default;
  friend auto operator<=>(const Condition&, const Condition&) = default;
};

struct EchoTrace {
  Sequence sequence = Sequence::two_pulse;
  std::vector<double> times_ms;  // t12 for 2PPE and 3PPE-vs-t12, t23 for 3PPE-vs-t23
  std::vector<double> intensity;
  std::optional<double> fixed_delay_ms;  // the delay not swept (3PPE only)
  Condition condition;
  std::string provenance;
  std::optional<std::uint64_t> seed;
  std::optional<ModelParams> truth;

  std::size_t size() const { return times_ms.size(); }

  void validate() const {
    if (times_ms.size() != intensity.size()) throw DataError("trace: time and intensity columns differ in length");
    if (times_ms.empty()) throw DataError("trace: no data rows");
    for (std::size_t i = 0; i < times_ms.size(); ++i) {
      if (!std::isfinite(times_ms[i]) || !std::isfinite(intensity[i])) throw DataError("trace: non-finite value");
      if (i > 0 && !(times_ms[i] > times_ms[i - 1])) throw DataError("trace: times are not strictly increasing");
    }
    if (times_ms.front() < 0.0) throw DataError("trace: negative delay");
    if (!(condition.temperature_K > 0.0)) throw DataError("trace: temperature must be > 0");
    if (condition.field_T < 0.0) throw DataError("trace: field must be >= 0");
    if (sequence != Sequence::two_pulse && !fixed_delay_ms)
      throw DataError("trace: 3PPE traces need the fixed delay header");
  }

  /// Rows as model inputs: (t12) for 2PPE, (t12, t23) for 3PPE.
  Dataset to_dataset() const {
    Dataset d;
    for (std::size_t i = 0; i < size(); ++i) {
      switch (sequence) {
        case Sequence::two_pulse: d.inputs.push_back({times_ms[i]}); break;
        case Sequence::three_pulse_vs_t23: d.inputs.push_back({fixed_delay_ms.value(), times_ms[i]}); break;
        case Sequence::three_pulse_vs_t12: d.inputs.push_back({times_ms[i], fixed_delay_ms.value()}); break;
      }
      d.values.push_back(intensity[i]);
    }
    return d;
  }
};

enum class ConditionAxis { field, temperature };

inline std::string_view to_string(ConditionAxis a) { return a == ConditionAxis::field ? "field" : "temperature"; }
inline std::string_view axis_unit(ConditionAxis a) { return a == ConditionAxis::field ? "T" : "K"; }

inline ConditionAxis axis_from_string(std::string_view s) {
  if (s == "field") return ConditionAxis::field;
  if (s == "temperature") return ConditionAxis::temperature;
  throw DataError("unknown condition axis '" + std::string(s) + "'");
}

enum class Quantity { gamma_eff, i0, mims_x, gamma0, gamma_tls, gamma_sd, rate_sd, beta };

inline constexpr std::array kAllQuantities = {Quantity::gamma_eff, Quantity::i0,       Quantity::mims_x,
                                              Quantity::gamma0,    Quantity::gamma_tls, Quantity::gamma_sd,
                                              Quantity::rate_sd,   Quantity::beta};

inline std::string_view to_string(Quantity q) {
  switch (q) {
    case Quantity::gamma_eff: return "gamma_eff";
    case Quantity::i0: return "i0";
    case Quantity::mims_x: return "x";
    case Quantity::gamma0: return "gamma0";
    case Quantity::gamma_tls: return "gamma_tls";
    case Quantity::gamma_sd: return "gamma_sd";
    case Quantity::rate_sd: return "rate_sd";
    case Quantity::beta: return "beta";
  }
  return "?";
}

inline std::string_view quantity_unit(Quantity q) {
  switch (q) {
    case Quantity::i0:
    case Quantity::mims_x:
    case Quantity::beta: return "1";
    default: return "kHz";
  }
}

inline Quantity quantity_from_string(std::string_view s) {
  for (Quantity q : kAllQuantities)
    if (to_string(q) == s) return q;
  throw DataError("unknown quantity '" + std::string(s) + "'");
}

inline constexpr std::string_view kFlagOk = "ok";
inline constexpr std::string_view kFlagAssumedTz = "assumed-tz";  // usable; T_Z taken from the default
inline constexpr std::string_view kFlagNotConverged = "not-converged";
inline constexpr std::string_view kFlagFailed = "fit-failed";

struct ScanRow {
  double condition = 0.0;
  double value = 0.0;
  double stderr_value = 0.0;
  std::string flag{kFlagOk};

  bool ok() const { return flag == kFlagOk || flag == kFlagAssumedTz; }
  friend bool operator==(const ScanRow&, const ScanRow&) = default;
};

/// Derived quantity versus one experimental condition; the other condition
/// is held at fixed_condition.
struct ScanTable {
  ConditionAxis axis = ConditionAxis::field;
  Quantity quantity = Quantity::gamma_eff;
  double fixed_condition = 0.0;
  std::vector<ScanRow> rows;

  void sort_rows() {
    std::stable_sort(rows.begin(), rows.end(), [](const ScanRow& a, const ScanRow& b) { return a.condition < b.condition; });
  }

  void validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && rows[i].condition < rows[i - 1].condition) throw DataError("table: rows not sorted by condition");
      if (rows[i].ok() && !(rows[i].stderr_value >= 0.0)) throw DataError("table: negative standard error");
    }
  }

  /// Rows as field- or temperature-model inputs; flagged rows are skipped.
  /// Field inputs are (B, T) with T = fixed_condition.
  Dataset to_dataset(bool use_errors = true) const {
    Dataset d;
    for (const ScanRow& r : rows) {
      if (!r.ok() || !std::isfinite(r.value)) continue;
      if (axis == ConditionAxis::field)
        d.inputs.push_back({r.condition, fixed_condition});
      else
        d.inputs.push_back({r.condition});
      d.values.push_back(r.value);
      if (use_errors) d.sigmas.push_back(r.stderr_value > 0.0 ? r.stderr_value : std::numeric_limits<double>::quiet_NaN());
    }
    return d;
  }

  std::string file_stem() const { return std::string(to_string(quantity)) + "_vs_" + std::string(to_string(axis)); }
};

// -- formatting helpers --------------------------------------------------------

namespace detail {

// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view s, std::string_view what) {
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw DataError("");
    return v;
  } catch (...) {
    throw DataError("cannot parse " + std::string(what) + " '" + t + "'");
  }
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// "# key: value" -> (key, value); returns false for plain comments.
inline bool header_field(std::string_view line, std::string& key, std::string& value) {
  std::string_view body = line.substr(1);
  const auto colon = body.find(':');
  if (colon == std::string_view::npos) return false;
  key = trim(body.substr(0, colon));
  value = trim(body.substr(colon + 1));
  return !key.empty() && key.find(' ') == std::string::npos;
}

inline double time_unit_to_ms(std::string_view unit) {
  if (unit == "ns") return 1e-6;
  if (unit == "us") return 1e-3;
  if (unit == "ms") return 1.0;
  if (unit == "s") return 1e3;
  throw DataError("unknown time unit '" + std::string(unit) + "'");
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace detail

// -- traces --------------------------------------------------------------------

/// Serialises a trace. Times are written in `unit`; with the default "ms"
/// every value reads back bit-identically.
inline std::string format_trace(const EchoTrace& t, std::string_view unit = "ms") {
  t.validate();
  const double per_ms = 1.0 / detail::time_unit_to_ms(unit);
  std::ostringstream os;
  os << "# unit-time: " << unit << "\n";
  os << "# sequence: " << to_string(t.sequence) << "\n";
  os << "# temperature_K: " << detail::exact(t.condition.temperature_K) << "\n";
  os << "# field_T: " << detail::exact(t.condition.field_T) << "\n";
  if (t.sequence == Sequence::three_pulse_vs_t23) os << "# t12: " << detail::exact(*t.fixed_delay_ms * per_ms) << "\n";
  if (t.sequence == Sequence::three_pulse_vs_t12) os << "# t23: " << detail::exact(*t.fixed_delay_ms * per_ms) << "\n";
  if (!t.provenance.empty()) os << "# provenance: " << t.provenance << "\n";
  if (t.seed) os << "# seed: " << *t.seed << "\n";
  if (t.truth) {
    os << "# truth: " << to_string(t.truth->model);
    for (double v : t.truth->values) os << ' ' << detail::exact(v);
    os << "\n";
  }
  for (std::size_t i = 0; i < t.size(); ++i)
    os << detail::exact(t.times_ms[i] * per_ms) << ' ' << detail::exact(t.intensity[i]) << "\n";
  return os.str();
}

inline void write_trace(const EchoTrace& t, const std::filesystem::path& path, std::string_view unit = "ms") {
  const std::string text = format_trace(t, unit);
  auto out = detail::open_for_write(path);
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

/// Parses a trace; units are normalised to milliseconds. A missing
/// unit-time header, unknown header keys, malformed rows and non-monotone
/// time columns are errors.
inline EchoTrace parse_trace(std::istream& in, const std::string& source = "") {
  EchoTrace t;
  t.provenance = source;
  std::optional<double> scale;
  std::optional<Sequence> seq;
  std::optional<double> temperature;
  std::optional<double> field;
  std::optional<double> fixed_raw;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    return DataError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '#') {
      std::string key;
      std::string value;
      if (!detail::header_field(trimmed, key, value)) continue;
      try {
        if (key == "unit-time") scale = detail::time_unit_to_ms(value);
        else if (key == "sequence") seq = sequence_from_string(value);
        else if (key == "temperature_K") temperature = detail::parse_double(value, key);
        else if (key == "field_T") field = detail::parse_double(value, key);
        else if (key == "t12" || key == "t23") fixed_raw = detail::parse_double(value, key);
        else if (key == "provenance") t.provenance = value;
        else if (key == "seed") t.seed = std::stoull(value);
        else if (key == "truth") {
          std::istringstream ts(value);
          std::string model;
          ts >> model;
          ModelParams mp{model_from_string(model), {}};
          std::string tok;
          while (ts >> tok) mp.values.push_back(detail::parse_double(tok, "truth value"));
          if (mp.values.size() != param_count(mp.model)) throw DataError("wrong number of truth values");
          t.truth = std::move(mp);
        } else {
          throw fail("unknown header '" + key + "'");
        }
      } catch (const DataError& e) {
        throw fail(std::string("malformed header: ") + e.what());
      } catch (const std::exception& e) {
        throw fail(std::string("malformed header: ") + e.what());
      }
      continue;
    }
    if (!scale) throw fail("data before '# unit-time:' header (unit header is required)");
    const auto fields = detail::split_fields(trimmed);
    if (fields.size() != 2) throw fail("expected two numeric columns");
    t.times_ms.push_back(detail::parse_double(fields[0], "time") * *scale);
    t.intensity.push_back(detail::parse_double(fields[1], "intensity"));
  }
  if (!scale) throw fail("missing '# unit-time:' header");
  if (!seq) throw fail("missing '# sequence:' header");
  if (!temperature) throw fail("missing '# temperature_K:' header");
  if (!field) throw fail("missing '# field_T:' header");
  t.sequence = *seq;
  t.condition = {*temperature, *field};
  if (fixed_raw) t.fixed_delay_ms = *fixed_raw * *scale;
  t.validate();
  return t;
}

inline EchoTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_trace(in, path.string());
}

// -- tables --------------------------------------------------------------------

namespace detail {
// Fixed six-significant-digit formatting used for all report output.
inline std::string sig6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%#.6g", v);
  return buf;
}
}  // namespace detail

inline std::string format_table(const ScanTable& table) {
  table.validate();
  std::ostringstream os;
  os << "# axis: " << to_string(table.axis) << "\n";
  os << "# quantity: " << to_string(table.quantity) << "\n";
  os << "# unit: " << quantity_unit(table.quantity) << "\n";
  if (table.axis == ConditionAxis::field)
    os << "# fixed_temperature_K: " << detail::sig6(table.fixed_condition) << "\n";
  else
    os << "# fixed_field_T: " << detail::sig6(table.fixed_condition) << "\n";
  os << "condition,value,stderr,flag\n";
  for (const ScanRow& r : table.rows)
    os << detail::sig6(r.condition) << ',' << detail::sig6(r.value) << ',' << detail::sig6(r.stderr_value) << ','
       << r.flag << "\n";
  return os.str();
}

inline ScanTable parse_table(std::istream& in, const std::string& source = "") {
  ScanTable t;
  std::optional<ConditionAxis> axis;
  std::optional<Quantity> quantity;
  bool saw_columns = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    return DataError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '#') {
      std::string key;
      std::string value;
      if (!detail::header_field(trimmed, key, value)) continue;
      if (key == "axis") axis = axis_from_string(value);
      else if (key == "quantity") quantity = quantity_from_string(value);
      else if (key == "unit") continue;
      else if (key == "fixed_temperature_K" || key == "fixed_field_T") t.fixed_condition = detail::parse_double(value, key);
      else throw fail("unknown header '" + key + "'");
      continue;
    }
    if (!saw_columns) {
      if (trimmed != "condition,value,stderr,flag") throw fail("expected column header 'condition,value,stderr,flag'");
      saw_columns = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(trimmed);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
    if (cells.size() != 4) throw fail("expected 4 columns");
    t.rows.push_back({detail::parse_double(cells[0], "condition"), detail::parse_double(cells[1], "value"),
                      detail::parse_double(cells[2], "stderr"), cells[3]});
  }
  if (!axis || !quantity) throw fail("missing axis or quantity header");
  t.axis = *axis;
  t.quantity = *quantity;
  t.validate();
  return t;
}

inline ScanTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_table(in, path.string());
}

inline void write_table(const ScanTable& table, const std::filesystem::path& path) {
  const std::string text = format_table(table);
  auto out = detail::open_for_write(path);
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace echofit
