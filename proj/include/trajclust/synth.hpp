#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "trajclust/common.hpp"
#include "trajclust/json_io.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

enum class PathKind { kStraight, kTurn };

/// Straight approach, optional circular arc, straight exit.
struct PathTemplate {
  PathKind kind = PathKind::kTurn;
  double x0 = 0.0;
  double y0 = 0.0;
  double heading0 = 0.0;    // rad
  double approach = 25.0;   // m
  double radius = 15.0;     // m
  double turn_angle = -kPi / 2;  // rad, positive turns left
  double exit = 20.0;       // m

  double arc_length() const { return kind == PathKind::kTurn ? std::abs(turn_angle) * radius : 0.0; }
  double length() const { return approach + arc_length() + exit; }

  /// Curvature (1/m, positive left) at arc length s.
  double curvature(double s) const {
    if (kind != PathKind::kTurn || s < approach || s >= approach + arc_length()) return 0.0;
    return (turn_angle > 0 ? 1.0 : -1.0) / radius;
  }

  struct Pose {
    double x, y, theta;
  };

  Pose pose(double s) const {
    const double ch = std::cos(heading0), sh = std::sin(heading0);
    const double s1 = std::min(s, approach);
    Pose p{x0 + s1 * ch, y0 + s1 * sh, heading0};
    if (kind == PathKind::kStraight) {
      const double rest = s - s1;
      return {p.x + rest * ch, p.y + rest * sh, wrap_angle(heading0)};
    }
    if (s <= approach) return {p.x, p.y, wrap_angle(heading0)};
    const double sign = turn_angle > 0 ? 1.0 : -1.0;
    const double u = std::min(s - approach, arc_length());
    const double cx = p.x - sign * radius * sh;
    const double cy = p.y + sign * radius * ch;
    const double h = heading0 + sign * u / radius;
    Pose q{cx + sign * radius * std::sin(h), cy - sign * radius * std::cos(h), h};
    const double rest = s - approach - arc_length();
    if (rest > 0.0) {
      q.x += rest * std::cos(h);
      q.y += rest * std::sin(h);
    }
    q.theta = wrap_angle(q.theta);
    return q;
  }

  /// The parallel path shifted `d` metres to the left.
  PathTemplate offset(double d) const {
    PathTemplate p = *this;
    p.x0 -= d * std::sin(heading0);
    p.y0 += d * std::cos(heading0);
    if (kind == PathKind::kTurn) p.radius = radius - (turn_angle > 0 ? d : -d);
    return p;
  }
};

enum class RampShape { kCosine, kLinear };

/// Speed waypoint; speed is held after the last one.
struct SpeedKnot {
  double t;
  double v;
};

/// Piecewise speed profile between knots, either with constant
/// acceleration (linear) or with zero acceleration at every knot (cosine).
class SpeedProfile {
 public:
  SpeedProfile(std::vector<SpeedKnot> knots, RampShape shape)
      : knots_(std::move(knots)), shape_(shape) {
    if (knots_.empty()) throw SpecError("speed profile needs at least one knot");
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (!(knots_[i].v >= 0.0)) throw SpecError("speed profile produces negative speed");
      if (i > 0 && !(knots_[i].t > knots_[i - 1].t))
        throw SpecError("speed knots must have increasing times");
    }
  }

  double speed(double t) const { return eval(t).first; }
  double accel(double t) const { return eval(t).second; }
  double final_speed() const { return knots_.back().v; }
  double last_knot_time() const { return knots_.back().t; }
  const std::vector<SpeedKnot>& knots() const { return knots_; }
  RampShape shape() const { return shape_; }

 private:
  std::pair<double, double> eval(double t) const {
    if (t < knots_.front().t) return {knots_.front().v, 0.0};
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      const auto& p = knots_[i];
      const auto& q = knots_[i + 1];
      if (t >= p.t && t < q.t) {
        const double span = q.t - p.t;
        const double tau = (t - p.t) / span;
        const double dv = q.v - p.v;
        if (shape_ == RampShape::kLinear) return {p.v + dv * tau, dv / span};
        return {p.v + dv * 0.5 * (1.0 - std::cos(kPi * tau)),
                dv * kPi / (2.0 * span) * std::sin(kPi * tau)};
      }
    }
    return {knots_.back().v, 0.0};
  }

  std::vector<SpeedKnot> knots_;
  RampShape shape_;
};

struct Archetype {
  std::string label;
  std::size_t count = 10;
  std::vector<SpeedKnot> knots;
  RampShape shape = RampShape::kCosine;
};

/// Per-sample random perturbations (all uniform in +/- the amplitude,
/// except position noise which is Gaussian).
struct NoiseSpec {
  double speed_scale = 0.0;     // relative scaling of all knot speeds
  double time_shift = 0.0;      // s, shift of every knot after the first
  double lateral = 0.0;         // m, parallel offset of the path
  double position_sigma = 0.0;  // m, measurement noise on x and y
};

struct ScenarioSpec {
  std::string maneuver_id = "synthetic";
  double wheelbase = 2.7;
  PathTemplate path;
  NoiseSpec noise;
  std::vector<Archetype> archetypes;
};

struct LabeledSet {
  ManeuverSet set;
  std::vector<std::string> labels;  // aligned with set.samples
};

namespace detail {

inline constexpr double kSimStep = 0.001;
inline constexpr double kMaxSimDuration = 600.0;

}  // namespace detail

/// Drives a kinematic bicycle along `path` with speed `profile`. Steering
/// follows the path curvature, so progress along the path runs at
/// v * cos(phi) and the pose stays on the path geometry.
inline Trajectory generate_trajectory(SampleId id, const PathTemplate& path,
                                      const SpeedProfile& profile, double wheelbase,
                                      double position_sigma = 0.0, Rng* rng = nullptr) {
  if (!(wheelbase > 0.0)) throw SpecError("wheelbase must be positive");
  if (path.kind == PathKind::kTurn && !(path.radius > 0.0)) throw SpecError("turn radius must be positive");
  const double total = path.length();
  if (!(total > 0.0)) throw SpecError("path has zero length");
  if (!(profile.final_speed() > 0.0))
    throw SpecError("speed profile ends stopped; the vehicle never leaves the maneuver");

  const auto rate = [&](double t, double s) {
    const double phi = std::atan(wheelbase * path.curvature(s));
    return profile.speed(t) * std::cos(phi);
  };

  Trajectory traj;
  traj.id = id;
  traj.wheelbase = wheelbase;
  double s = 0.0;
  const int substeps = static_cast<int>(std::llround(kFrameStep / detail::kSimStep));
  for (long frame = 0;; ++frame) {
    const double t = static_cast<double>(frame) * kFrameStep;
    const auto pose = path.pose(s);
    double x = pose.x, y = pose.y;
    if (rng) {
      x += rng->gaussian(position_sigma);
      y += rng->gaussian(position_sigma);
    }
    traj.points.push_back({t, x, y, pose.theta, profile.speed(t), profile.accel(t)});
    if (s >= total) break;
    if (t > detail::kMaxSimDuration) throw SpecError("trajectory does not finish within 600 s");
    for (int k = 0; k < substeps; ++k) {
      const double h = detail::kSimStep;
      const double tk = t + k * h;
      const double k1 = rate(tk, s);
      const double k2 = rate(tk + h / 2, s + h / 2 * k1);
      const double k3 = rate(tk + h / 2, s + h / 2 * k2);
      const double k4 = rate(tk + h, s + h * k3);
      s += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
  }
  return traj;
}

/// Generates labeled trajectories for every archetype. Ids run from 0 in
/// archetype order. Deterministic for a fixed seed.
inline LabeledSet synthesize(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.archetypes.empty()) throw SpecError("scenario declares no archetypes");
  Rng rng(seed);
  LabeledSet out;
  out.set.maneuver_id = spec.maneuver_id;
  SampleId next_id = 0;
  for (const auto& arch : spec.archetypes) {
    if (arch.knots.empty()) throw SpecError("archetype '" + arch.label + "' has no speed knots");
    for (const auto& k : arch.knots)
      if (k.v < 0.0) throw SpecError("archetype '" + arch.label + "' has a negative speed");
    for (std::size_t n = 0; n < arch.count; ++n) {
      const double scale = 1.0 + rng.symmetric(spec.noise.speed_scale);
      const double shift = rng.symmetric(spec.noise.time_shift);
      const double lateral = rng.symmetric(spec.noise.lateral);
      std::vector<SpeedKnot> knots = arch.knots;
      for (std::size_t i = 0; i < knots.size(); ++i) {
        knots[i].v *= scale;
        if (i > 0) knots[i].t += shift;
      }
      if (knots.size() > 1 && !(knots[1].t > knots[0].t))
        throw SpecError("time jitter larger than the first speed segment");
      const SpeedProfile profile(std::move(knots), arch.shape);
      out.set.samples.push_back(generate_trajectory(next_id++, spec.path.offset(lateral), profile,
                                                    spec.wheelbase, spec.noise.position_sigma, &rng));
      out.labels.push_back(arch.label);
    }
  }
  return out;
}

// Archetype builders for the behaviors observed at intersections.

inline Archetype constant_speed_archetype(std::string label, double v, std::size_t count) {
  return {std::move(label), count, {{0.0, v}}, RampShape::kCosine};
}

/// Cruise, slow to `v_low` without stopping, then recover.
inline Archetype slow_down_archetype(std::string label, double v0, double v_low, std::size_t count) {
  return {std::move(label), count, {{0.0, v0}, {1.0, v0}, {3.5, v_low}, {4.5, v_low}, {7.5, v0}},
          RampShape::kCosine};
}

/// Cruise, brake to a standstill, wait, then pull away.
inline Archetype full_stop_archetype(std::string label, double v0, std::size_t count) {
  return {std::move(label), count, {{0.0, v0}, {1.0, v0}, {4.5, 0.0}, {6.5, 0.0}, {10.5, v0}},
          RampShape::kCosine};
}

/// Three archetypes (cruise / yield / stop) through a right turn.
inline ScenarioSpec default_scenario(std::size_t per_archetype = 10) {
  ScenarioSpec spec;
  spec.maneuver_id = "synthetic-right-turn";
  spec.noise.speed_scale = 0.03;
  spec.noise.time_shift = 0.1;
  spec.archetypes = {constant_speed_archetype("cruise", 8.0, per_archetype),
                     slow_down_archetype("yield", 8.0, 3.5, per_archetype),
                     full_stop_archetype("stop", 8.0, per_archetype)};
  return spec;
}

// ---------------------------------------------------------------------------
// JSON

inline ScenarioSpec scenario_from_json(const Json& j) {
  ScenarioSpec spec;
  try {
    spec.maneuver_id = j.value("maneuver_id", spec.maneuver_id);
    spec.wheelbase = j.value("wheelbase", spec.wheelbase);
    if (j.contains("path")) {
      const auto& p = j.at("path");
      const std::string kind = p.value("kind", std::string("turn"));
      if (kind == "straight") {
        spec.path.kind = PathKind::kStraight;
      } else if (kind == "turn") {
        spec.path.kind = PathKind::kTurn;
      } else {
        throw SpecError("unknown path kind '" + kind + "'");
      }
      spec.path.x0 = p.value("x", 0.0);
      spec.path.y0 = p.value("y", 0.0);
      spec.path.heading0 = p.value("heading_deg", 0.0) * kPi / 180.0;
      spec.path.approach = p.value("approach", spec.path.approach);
      spec.path.radius = p.value("radius", spec.path.radius);
      spec.path.turn_angle = p.value("angle_deg", spec.path.turn_angle * 180.0 / kPi) * kPi / 180.0;
      spec.path.exit = p.value("exit", spec.path.exit);
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      spec.noise.speed_scale = n.value("speed_scale", 0.0);
      spec.noise.time_shift = n.value("time_shift", 0.0);
      spec.noise.lateral = n.value("lateral", 0.0);
      spec.noise.position_sigma = n.value("position_sigma", 0.0);
    }
    for (const auto& a : j.at("archetypes")) {
      Archetype arch;
      arch.label = a.at("label").get<std::string>();
      arch.count = a.value("count", std::size_t{10});
      const std::string shape = a.value("shape", std::string("cosine"));
      if (shape == "cosine") {
        arch.shape = RampShape::kCosine;
      } else if (shape == "linear") {
        arch.shape = RampShape::kLinear;
      } else {
        throw SpecError("unknown ramp shape '" + shape + "'");
      }
      for (const auto& k : a.at("knots")) arch.knots.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
      spec.archetypes.push_back(std::move(arch));
    }
  } catch (const Json::exception& e) {
    throw SpecError(std::string("malformed scenario: ") + e.what());
  }
  return spec;
}

inline Json to_json(const ScenarioSpec& spec) {
  Json archetypes = Json::array();
  for (const auto& a : spec.archetypes) {
    Json knots = Json::array();
    for (const auto& k : a.knots) knots.push_back(Json::array({k.t, k.v}));
    archetypes.push_back(Json{{"label", a.label},
                              {"count", a.count},
                              {"shape", a.shape == RampShape::kCosine ? "cosine" : "linear"},
                              {"knots", std::move(knots)}});
  }
  const auto& p = spec.path;
  return Json{{"maneuver_id", spec.maneuver_id},
              {"wheelbase", spec.wheelbase},
              {"path", Json{{"kind", p.kind == PathKind::kTurn ? "turn" : "straight"},
                            {"x", p.x0},
                            {"y", p.y0},
                            {"heading_deg", p.heading0 * 180.0 / kPi},
                            {"approach", p.approach},
                            {"radius", p.radius},
                            {"angle_deg", p.turn_angle * 180.0 / kPi},
                            {"exit", p.exit}}},
              {"noise", Json{{"speed_scale", spec.noise.speed_scale},
                             {"time_shift", spec.noise.time_shift},
                             {"lateral", spec.noise.lateral},
                             {"position_sigma", spec.noise.position_sigma}}},
              {"archetypes", std::move(archetypes)}};
}

inline std::string labels_csv(const LabeledSet& ls) {
  std::string out = "id,label\n";
  for (std::size_t i = 0; i < ls.set.samples.size(); ++i)
    out += std::to_string(ls.set.samples[i].id) + ',' + ls.labels[i] + '\n';
  return out;
}

/// Reads an `id,label` file written by labels_csv.
inline std::map<SampleId, std::string> load_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptySetError(path + ": empty label file");
  std::map<SampleId, std::string> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 2) throw DataError(path + ":" + std::to_string(lineno) + ": expected id,label");
    const auto id = static_cast<SampleId>(parse_double(cells[0]));
    if (!out.emplace(id, cells[1]).second)
      throw DataError(path + ": duplicate id " + std::to_string(id));
  }
  return out;
}

}  // namespace trajclust
