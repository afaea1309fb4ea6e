#pragma once

#include <optional>

#include <Eigen/Dense>

#include "trajclust/common.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

/// Vehicle state: position, heading and longitudinal speed.
struct State {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;

  Eigen::Vector4d vec() const { return {x, y, theta, v}; }
  static State from(const Eigen::Vector4d& s) { return {s(0), s(1), s(2), s(3)}; }
  static State from(const TrajectoryPoint& p) { return {p.x, p.y, p.theta, p.v}; }

  friend bool operator==(const State&, const State&) = default;
};

struct Control {
  double a = 0.0;    // longitudinal acceleration, m/s^2
  double phi = 0.0;  // steering angle, rad
};

/// Bounds applied by the steering controller.
struct SteeringLimits {
  double phi_max = 0.61;  // rad
  double v_floor = 0.1;   // m/s, replaces smaller speeds in the controller
};

/// Time derivative of the front-wheel kinematic bicycle model.
inline Eigen::Vector4d bicycle_rates(const State& s, const Control& u, double wheelbase) {
  const double c = std::cos(u.phi);
  return {s.v * std::cos(s.theta) * c, s.v * std::sin(s.theta) * c,
          s.v / wheelbase * std::sin(u.phi), u.a};
}

/// One explicit Euler step. Speed is clamped at zero and heading re-wrapped.
inline State step(const State& s, const Control& u, double wheelbase, double dt) {
  const Eigen::Vector4d next = s.vec() + dt * bicycle_rates(s, u, wheelbase);
  return {next(0), next(1), wrap_angle(next(2)), std::max(0.0, next(3))};
}

/// d step / d state, i.e. I + dt * df/dx.
inline Eigen::Matrix4d jacobian_state(const State& s, const Control& u, double wheelbase,
                                      double dt) {
  const double c = std::cos(u.phi);
  const double st = std::sin(s.theta), ct = std::cos(s.theta);
  Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
  g(0, 2) = -dt * s.v * st * c;
  g(0, 3) = dt * ct * c;
  g(1, 2) = dt * s.v * ct * c;
  g(1, 3) = dt * st * c;
  g(2, 3) = dt * std::sin(u.phi) / wheelbase;
  return g;
}

struct SteeringCommand {
  double phi = 0.0;
  double reference_heading = 0.0;  // theta_tr actually used
  double cross_track = 0.0;        // signed lateral offset, positive left of the reference
};

/// Shorter reference segments are treated as degenerate.
inline constexpr double kMinSegmentLength = 1e-9;

/// Stanley-type lateral controller toward the line through `ref_cur` in the
/// direction of `ref_next`. A vehicle left of the line steers right. For a
/// degenerate segment `fallback_heading` is used as reference direction.
inline SteeringCommand stanley_phi(const State& s, const TrajectoryPoint& ref_cur,
                                   const TrajectoryPoint& ref_next, double gain,
                                   const SteeringLimits& limits = {},
                                   std::optional<double> fallback_heading = std::nullopt) {
  const double dx = ref_next.x - ref_cur.x;
  const double dy = ref_next.y - ref_cur.y;
  double heading;
  if (std::hypot(dx, dy) >= kMinSegmentLength) {
    heading = std::atan2(dy, dx);
  } else if (fallback_heading) {
    heading = *fallback_heading;
  } else {
    throw DataError("degenerate reference segment without previous heading");
  }
  const double cross = std::cos(heading) * (s.y - ref_cur.y) - std::sin(heading) * (s.x - ref_cur.x);
  const double v = std::max(s.v, limits.v_floor);
  const double phi = wrap_angle(heading - s.theta) - std::atan(gain * cross / v);
  return {std::clamp(phi, -limits.phi_max, limits.phi_max), heading, cross};
}

/// Produces controls that make a state follow one sample trajectory:
/// acceleration read from the sample, steering toward its path. Keeps the
/// last valid reference heading for stretches where the sample is stopped.
class SampleController {
 public:
  SampleController(const Trajectory& sample, double gain, SteeringLimits limits = {})
      : sample_(&sample), gain_(gain), limits_(limits) {}

  Control control_at(const State& s, double t) {
    const std::size_t i = sample_->segment_at(t);
    const auto& p = sample_->points[i];
    const auto& q = sample_->points[i + 1];
    const double w = (t - p.t) / (q.t - p.t);
    const double a = p.a + w * (q.a - p.a);
    const double fallback = last_heading_.value_or(p.theta);
    const auto cmd = stanley_phi(s, p, q, gain_, limits_, fallback);
    last_heading_ = cmd.reference_heading;
    return {a, cmd.phi};
  }

 private:
  const Trajectory* sample_;
  double gain_;
  SteeringLimits limits_;
  std::optional<double> last_heading_;
};

inline Control controls_from_sample(const Trajectory& sample, const State& s, double t,
                                    double gain, const SteeringLimits& limits = {}) {
  SampleController ctl(sample, gain, limits);
  return ctl.control_at(s, t);
}

}  // namespace trajclust
