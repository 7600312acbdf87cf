#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "echofit/data.hpp"
#include "echofit/presets.hpp"
#include "echofit/synth.hpp"

using namespace echofit;
namespace fs = std::filesystem;

namespace {

EchoTrace parse(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in, "mem");
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "echofit_test_data";
  fs::create_directories(dir);
  return dir / name;
}

EchoTrace noisy_trace() {
  SynthSpec s;
  s.truth = to_model_params(MimsParams{0.8, Duration::microseconds(40.0), 1.3});
  s.grid = Grid::linear(1e-4, 0.06, 57);
  s.noise = Noise::multiplicative(0.02);
  s.seed = 31;
  s.modulation = Modulation{};
  s.condition = {0.007, 0.09};
  return synth_trace(s);
}

}  // namespace

TEST(TraceFormat, MinimalThreeRows) {
  const EchoTrace t = parse(
      "# unit-time: us\n# sequence: 2PPE\n# temperature_K: 0.007\n# field_T: 0.09\n"
      "1 0.9\n2, 0.8\n3\t0.7\n");
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(t.sequence, Sequence::two_pulse);
  EXPECT_DOUBLE_EQ(t.times_ms[1], 2e-3);
  EXPECT_EQ(t.intensity[2], 0.7);
  EXPECT_EQ(t.condition, (Condition{0.007, 0.09}));
}

TEST(TraceFormat, NanosecondHeaderScalesTimes) {
  const EchoTrace t = parse(
      "# unit-time: ns\n# sequence: 3PPE-vs-t23\n# temperature_K: 0.007\n# field_T: 0\n# t12: 330\n"
      "50000 0.5\n5000000 0.2\n");
  EXPECT_EQ(t.times_ms[0], 50000 * 1e-6);
  EXPECT_EQ(t.times_ms[1], 5000000 * 1e-6);
  EXPECT_EQ(t.fixed_delay_ms.value(), 330 * 1e-6);
}

TEST(TraceFormat, MissingUnitHeaderIsError) {
  EXPECT_THROW(parse("# sequence: 2PPE\n# temperature_K: 0.007\n# field_T: 0\n1 0.9\n2 0.8\n"), DataError);
  EXPECT_THROW(parse("# sequence: 2PPE\n# temperature_K: 0.007\n# field_T: 0\n"), DataError);
}

TEST(TraceFormat, MalformedInputIsError) {
  const std::string head = "# unit-time: us\n# sequence: 2PPE\n# temperature_K: 0.007\n# field_T: 0\n";
  EXPECT_THROW(parse(head + "1 0.9\n1 0.8\n"), DataError);           // not strictly increasing
  EXPECT_THROW(parse(head + "2 0.9\n1 0.8\n"), DataError);           // decreasing
  EXPECT_THROW(parse(head + "1 0.9 3\n"), DataError);                // three columns
  EXPECT_THROW(parse(head + "1 abc\n"), DataError);                  // not a number
  EXPECT_THROW(parse(head + "1 nan\n"), DataError);                  // non-finite
  EXPECT_THROW(parse("# unit-time: fortnights\n"), DataError);       // unknown unit
  EXPECT_THROW(parse(head + "# colour: blue\n1 0.9\n"), DataError);  // unknown header
  EXPECT_THROW(parse("# unit-time: us\n# sequence: 3PPE-vs-t23\n# temperature_K: 0.007\n# field_T: 0\n1 0.9\n"),
               DataError);  // 3PPE without fixed delay
}

TEST(TraceFormat, RoundTripIsBitExact) {
  const EchoTrace t = noisy_trace();
  const fs::path p = scratch("roundtrip.dat");
  write_trace(t, p);
  const EchoTrace back = load_trace(p);
  EXPECT_EQ(back.times_ms, t.times_ms);
  EXPECT_EQ(back.intensity, t.intensity);
  EXPECT_EQ(back.condition, t.condition);
  EXPECT_EQ(back.seed, t.seed);
  EXPECT_EQ(back.provenance, t.provenance);
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(back.truth->model, t.truth->model);
  EXPECT_EQ(back.truth->values, t.truth->values);
  // Writing again gives the same bytes.
  EXPECT_EQ(format_trace(back), format_trace(t));
}

TEST(TraceFormat, RoundTripInOtherUnitsWithinPrecision) {
  const EchoTrace t = noisy_trace();
  for (const char* unit : {"ns", "us", "s"}) {
    std::istringstream in(format_trace(t, unit));
    const EchoTrace back = parse_trace(in, "mem");
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(back.times_ms[i], t.times_ms[i], 1e-15 * t.times_ms[i]);
    EXPECT_EQ(back.intensity, t.intensity);
  }
}

TEST(TraceFormat, ThreePulseRoundTrip) {
  SynthSpec s;
  const auto p = presets::echo_7mK_009T();
  s.truth = to_model_params(p.three_level, p.diffusion);
  s.axis = 0;
  s.fixed_inputs = {0.0, 1.0};
  s.grid = Grid::linear(1e-4, 1e-3, 10);
  s.noise = Noise::multiplicative(0.03);
  s.seed = 2;
  const EchoTrace t = synth_trace(s);
  EXPECT_EQ(t.sequence, Sequence::three_pulse_vs_t12);
  std::istringstream in(format_trace(t));
  const EchoTrace back = parse_trace(in);
  EXPECT_EQ(back.sequence, Sequence::three_pulse_vs_t12);
  EXPECT_EQ(back.fixed_delay_ms, t.fixed_delay_ms);
  EXPECT_EQ(back.intensity, t.intensity);
}

TEST(TraceFormat, MissingFileIsError) { EXPECT_THROW(load_trace("/nonexistent/trace.dat"), DataError); }

TEST(TraceFormat, LoadDoesNotModifyFile) {
  const fs::path p = scratch("readonly.dat");
  write_trace(noisy_trace(), p);
  const auto before = fs::last_write_time(p);
  std::ifstream f(p);
  const std::string content((std::istreambuf_iterator<char>(f)), {});
  (void)load_trace(p);
  std::ifstream g(p);
  EXPECT_EQ(std::string((std::istreambuf_iterator<char>(g)), {}), content);
  EXPECT_EQ(fs::last_write_time(p), before);
}

TEST(TraceFormat, ToDatasetInputs) {
  EchoTrace t = parse(
      "# unit-time: ms\n# sequence: 3PPE-vs-t23\n# temperature_K: 0.007\n# field_T: 0\n# t12: 0.00033\n"
      "0.05 0.5\n5 0.2\n");
  const Dataset d = t.to_dataset();
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.inputs[1], (std::vector<double>{0.00033, 5.0}));
}

TEST(TableFormat, RoundTripAtSixDigits) {
  ScanTable t{ConditionAxis::field, Quantity::gamma_eff, 0.007, {}};
  t.rows = {{0.0, 40.0213, 0.512, "ok"},
            {0.09, 9.94452, 0.1234, "ok"},
            {0.14, std::nan(""), std::nan(""), "fit-failed"}};
  const std::string text = format_table(t);
  std::istringstream in(text);
  const ScanTable back = parse_table(in, "mem");
  EXPECT_EQ(back.axis, t.axis);
  EXPECT_EQ(back.quantity, t.quantity);
  EXPECT_EQ(back.fixed_condition, t.fixed_condition);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.rows[1].value, 9.94452);
  EXPECT_TRUE(std::isnan(back.rows[2].value));
  EXPECT_EQ(back.rows[2].flag, "fit-failed");
  EXPECT_EQ(format_table(back), text);
  EXPECT_NE(text.find("condition,value,stderr,flag\n0.00000,40.0213,0.512000,ok\n"), std::string::npos);
}

TEST(TableFormat, ValidationErrors) {
  ScanTable t{ConditionAxis::temperature, Quantity::beta, 0.09, {{0.2, 0.5, 0.1, "ok"}, {0.1, 0.4, 0.1, "ok"}}};
  EXPECT_THROW(t.validate(), DataError);
  t.sort_rows();
  EXPECT_NO_THROW(t.validate());
  t.rows[0].stderr_value = -1.0;
  EXPECT_THROW(t.validate(), DataError);
  std::istringstream missing("condition,value,stderr,flag\n0.1,1,0,ok\n");
  EXPECT_THROW(parse_table(missing), DataError);
}

TEST(TableFormat, DatasetSkipsFlaggedRows) {
  ScanTable t{ConditionAxis::field, Quantity::gamma_eff, 0.007, {}};
  t.rows = {{0.0, 40.0, 0.5, "ok"}, {0.1, 9.0, 0.2, "fit-failed"}, {0.2, 9.5, 0.0, "assumed-tz"}};
  const Dataset d = t.to_dataset();
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.inputs[1], (std::vector<double>{0.2, 0.007}));
  EXPECT_EQ(d.sigmas[0], 0.5);
  EXPECT_TRUE(std::isnan(d.sigmas[1]));
  EXPECT_EQ(t.file_stem(), "gamma_eff_vs_field");
}
