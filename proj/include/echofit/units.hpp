#pragma once

#include <cmath>
#include <numbers>

namespace echofit {

/// Ratio of the Bohr magneton to the Boltzmann constant, in kelvin per tesla.
/// CODATA 2018: mu_B = 9.2740100783e-24 J/T, k_B = 1.380649e-23 J/K.
inline constexpr double kBohrMagneton = 9.2740100783e-24;
inline constexpr double kBoltzmann = 1.380649e-23;
inline constexpr double kMuBOverKB = kBohrMagneton / kBoltzmann;

inline constexpr double kPi = std::numbers::pi;

// Internal base units: time in milliseconds, linewidth/rate in kHz, so any
// rate*time product is dimensionless without extra factors.

/// A time interval stored in milliseconds.
class Duration {
 public:
  constexpr Duration() = default;

  static constexpr Duration nanoseconds(double v) { return Duration(v * 1e-6); }
  static constexpr Duration microseconds(double v) { return Duration(v * 1e-3); }
  static constexpr Duration milliseconds(double v) { return Duration(v); }
  static constexpr Duration seconds(double v) { return Duration(v * 1e3); }

  constexpr double ms() const { return ms_; }
  constexpr double us() const { return ms_ * 1e3; }
  constexpr double ns() const { return ms_ * 1e6; }
  constexpr double s() const { return ms_ * 1e-3; }

  friend constexpr bool operator==(Duration, Duration) = default;
  friend constexpr auto operator<=>(Duration, Duration) = default;

 private:
  constexpr explicit Duration(double ms) : ms_(ms) {}
  double ms_ = 0.0;
};

/// A linewidth or rate stored in kHz.
class Frequency {
 public:
  constexpr Frequency() = default;

  static constexpr Frequency hertz(double v) { return Frequency(v * 1e-3); }
  static constexpr Frequency kilohertz(double v) { return Frequency(v); }
  static constexpr Frequency megahertz(double v) { return Frequency(v * 1e3); }

  constexpr double khz() const { return khz_; }
  constexpr double hz() const { return khz_ * 1e3; }
  constexpr double mhz() const { return khz_ * 1e-3; }

  friend constexpr bool operator==(Frequency, Frequency) = default;
  friend constexpr auto operator<=>(Frequency, Frequency) = default;

 private:
  constexpr explicit Frequency(double khz) : khz_(khz) {}
  double khz_ = 0.0;
};

namespace literals {
constexpr Duration operator""_ns(long double v) { return Duration::nanoseconds(static_cast<double>(v)); }
constexpr Duration operator""_us(long double v) { return Duration::microseconds(static_cast<double>(v)); }
constexpr Duration operator""_ms(long double v) { return Duration::milliseconds(static_cast<double>(v)); }
constexpr Duration operator""_s(long double v) { return Duration::seconds(static_cast<double>(v)); }
constexpr Frequency operator""_kHz(long double v) { return Frequency::kilohertz(static_cast<double>(v)); }
}  // namespace literals

}  // namespace echofit
