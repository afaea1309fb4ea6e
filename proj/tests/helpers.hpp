#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "trajclust/trajclust.hpp"

namespace testutil {

using namespace trajclust;

/// Straight trajectory along the x axis at constant speed, 25 Hz.
inline Trajectory straight_line(SampleId id, double v, double duration, double heading = 0.0, double a = 0.0) {
  Trajectory t;
  t.id = id;
  const auto n = static_cast<int>(std::lround(duration * kFrameRate));
  double s = 0.0, speed = v;
  for (int i = 0; i <= n; ++i) {
    const double ti = i * kFrameStep;
    t.points.push_back({ti, s * std::cos(heading), s * std::sin(heading), heading, speed, a});
    s += speed * kFrameStep + 0.5 * a * kFrameStep * kFrameStep;
    speed = std::max(0.0, speed + a * kFrameStep);
  }
  return t;
}

/// Zero-noise scenario on a straight road with the default archetypes.
inline ScenarioSpec straight_scenario(std::size_t per = 10) {
  auto spec = default_scenario(per);
  spec.path.kind = PathKind::kStraight;
  return spec;
}

/// Centroid for the 2x2 behavior design on a straight road. Aggressive:
/// 14 m/s, brakes at 3 m/s^2, pulls away at 2 m/s^2. Conservative: 6 m/s,
/// 1 m/s^2 both ways. Either slows to half speed for 1 s or stops for 2 s.
inline Trajectory design_centroid(SampleId id, bool aggressive, bool full_stop, double jitter = 0.0) {
  const double v0 = (aggressive ? 14.0 : 6.0) * (1.0 + jitter);
  const double brake = aggressive ? 3.0 : 1.0, accel = aggressive ? 2.0 : 1.0;
  const double v_low = full_stop ? 0.0 : 0.5 * v0;
  const double dwell = full_stop ? 2.0 : 1.0;
  const double t1 = 1.0 + jitter, t2 = t1 + (v0 - v_low) / brake, t3 = t2 + dwell, t4 = t3 + (v0 - v_low) / accel;
  const SpeedProfile profile({{0.0, v0}, {t1, v0}, {t2, v_low}, {t3, v_low}, {t4, v0}}, RampShape::kLinear);
  PathTemplate path;
  path.kind = PathKind::kStraight;
  path.approach = 120.0;
  path.exit = 30.0;
  return generate_trajectory(id, path, profile, 2.7);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("trajclust_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Runs the CLI with stdout/stderr discarded; returns its exit code.
inline int run_cli(const std::string& args) {
  const std::string cmd = std::string(TRAJCLUST_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Membership series with constant probability p over n updates.
inline MembershipSeries constant_series(double p, std::size_t n, double p_floor = 1e-15) {
  MembershipSeries s;
  s.n_updates = n;
  for (std::size_t i = 0; i < n; ++i) {
    s.times.push_back(0.08 * static_cast<double>(i + 1));
    s.probs.push_back(p);
    s.d2.push_back(p > 0.0 ? 0.0 : kInf);
  }
  s.nll = p <= p_floor ? kInf : -static_cast<double>(n) * std::log(p);
  return s;
}

}  // namespace testutil
