#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace trajclust {

using SampleId = std::int64_t;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input table lacks a required column or declares an invalid layout.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Input rows violate a data invariant (ordering, sign, gaps).
class DataError : public Error {
 public:
  using Error::Error;
};

class EmptySetError : public Error {
 public:
  using Error::Error;
};

/// Scenario description for the generator is inconsistent.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Time query outside the span of a trajectory.
class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

class FeatureError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Source frame rate of the maneuver recordings.
inline constexpr double kFrameRate = 25.0;
inline constexpr double kFrameStep = 1.0 / kFrameRate;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// Formats a double with 17 significant digits (round-trip exact).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Parses a double written by format_double (accepts inf / nan).
inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError("not a number: '" + s + "'");
  }
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\r' || s[pos] == '\t')) ++pos;
  if (pos != s.size()) throw DataError("not a number: '" + s + "'");
  return v;
}

/// Portable uniform / Gaussian draws, so that generated sets do not depend
/// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double symmetric(double amplitude) { return amplitude * (2.0 * uniform() - 1.0); }
  double gaussian(double sigma) {
    if (sigma == 0.0) return 0.0;
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace trajclust
