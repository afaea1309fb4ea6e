#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajclust/common.hpp"
#include "trajclust/json_io.hpp"

namespace trajclust {

struct TrajectoryPoint {
  double t = 0.0;      // s, relative to trajectory start
  double x = 0.0;      // m
  double y = 0.0;      // m
  double theta = 0.0;  // rad, (-pi, pi]
  double v = 0.0;      // longitudinal speed, m/s, >= 0
  double a = 0.0;      // longitudinal acceleration, m/s^2

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

/// One observed vehicle pass through a maneuver.
struct Trajectory {
  SampleId id = 0;
  std::vector<TrajectoryPoint> points;
  double wheelbase = 2.7;

  double t_first() const { return points.front().t; }
  double t_last() const { return points.back().t; }
  double duration() const { return t_last() - t_first(); }

  /// Throws DataError when an invariant is violated.
  void validate() const {
    const std::string who = "trajectory " + std::to_string(id);
    if (points.size() < 2) throw DataError(who + ": fewer than 2 points");
    if (!(wheelbase > 0.0)) throw DataError(who + ": wheelbase must be positive");
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.y) ||
          !std::isfinite(p.theta) || !std::isfinite(p.v) || !std::isfinite(p.a))
        throw DataError(who + ": non-finite value at point " + std::to_string(i));
      if (p.v < 0.0) throw DataError(who + ": negative longitudinal speed");
      if (i > 0 && !(p.t > points[i - 1].t))
        throw DataError(who + ": time not strictly increasing");
    }
  }

  /// Index i of the segment [i, i+1] containing t.
  std::size_t segment_at(double t) const {
    if (t < t_first() || t > t_last())
      throw ExtrapolationError("time " + format_double(t) + " outside trajectory " +
                               std::to_string(id));
    auto it = std::upper_bound(points.begin(), points.end(), t,
                               [](double tv, const TrajectoryPoint& p) { return tv < p.t; });
    std::size_t i = static_cast<std::size_t>(it - points.begin());
    i = i == 0 ? 0 : i - 1;
    return std::min(i, points.size() - 2);
  }

  /// Linear interpolation of all channels; heading along the shorter arc.
  TrajectoryPoint at(double t) const {
    const std::size_t i = segment_at(t);
    const auto& p = points[i];
    const auto& q = points[i + 1];
    const double w = (t - p.t) / (q.t - p.t);
    TrajectoryPoint r;
    r.t = t;
    r.x = p.x + w * (q.x - p.x);
    r.y = p.y + w * (q.y - p.y);
    r.theta = wrap_angle(p.theta + w * wrap_angle(q.theta - p.theta));
    r.v = p.v + w * (q.v - p.v);
    r.a = p.a + w * (q.a - p.a);
    return r;
  }

  double mean_speed() const {
    double s = 0.0;
    for (const auto& p : points) s += p.v;
    return s / static_cast<double>(points.size());
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Gate {
  double x = 0.0;
  double y = 0.0;
  double radius = 3.0;

  bool contains(double px, double py) const {
    return std::hypot(px - x, py - y) <= radius;
  }
  friend bool operator==(const Gate&, const Gate&) = default;
};

struct Gates {
  Gate start;
  Gate end;
  friend bool operator==(const Gates&, const Gates&) = default;
};

/// All samples of one maneuver, kept sorted by id.
struct ManeuverSet {
  std::string maneuver_id;
  std::vector<Trajectory> samples;
  std::optional<Gates> gates;

  void validate() const {
    std::set<SampleId> seen;
    for (const auto& s : samples) {
      s.validate();
      if (!seen.insert(s.id).second)
        throw DataError("duplicate sample id " + std::to_string(s.id));
    }
  }

  void sort_by_id() {
    std::sort(samples.begin(), samples.end(),
              [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
  }

  std::vector<SampleId> ids() const {
    std::vector<SampleId> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.id);
    return out;
  }

  const Trajectory& by_id(SampleId id) const {
    auto it = std::lower_bound(samples.begin(), samples.end(), id,
                               [](const Trajectory& t, SampleId v) { return t.id < v; });
    if (it == samples.end() || it->id != id)
      throw DataError("unknown sample id " + std::to_string(id));
    return *it;
  }

  bool contains(SampleId id) const {
    return std::binary_search(samples.begin(), samples.end(), Trajectory{id, {}, 1.0},
                              [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
  }

  friend bool operator==(const ManeuverSet&, const ManeuverSet&) = default;
};

/// l = 0.6 * vehicle length, clamped to [1.5, 4.0] m.
inline double wheelbase_from_length(double length) {
  return std::clamp(0.6 * length, 1.5, 4.0);
}

// ---------------------------------------------------------------------------
// CSV ingestion

enum class AngleUnit { kDegrees, kRadians };

/// Column names of an InD-style track table.
struct CsvSchema {
  std::string frame = "frame";
  std::string track_id = "trackId";
  std::string x = "xCenter";
  std::string y = "yCenter";
  std::string heading = "heading";
  std::string lon_velocity = "lonVelocity";
  std::string lon_acceleration = "lonAcceleration";
  std::string length = "length";
  AngleUnit heading_unit = AngleUnit::kDegrees;
  std::string maneuver_id = "maneuver";
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r\"");
    const auto e = cell.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct RawRow {
  long long frame;
  double x, y, heading, v, a, length;
};

// Up to this many consecutive missing frames are filled by interpolation.
inline constexpr long long kMaxFrameGap = 3;

}  // namespace detail

/// Loads one maneuver from a track table. Tracks rejected for long frame
/// gaps or reverse driving are dropped and described in `rejected`.
inline ManeuverSet load_csv(const std::string& path, const CsvSchema& schema = {},
                            std::vector<std::string>* rejected = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r\n") == std::string::npos)
    throw EmptySetError(path + ": empty file");

  const auto header = detail::split_csv_line(line);
  const auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_frame = column(schema.frame), c_id = column(schema.track_id),
                    c_x = column(schema.x), c_y = column(schema.y),
                    c_h = column(schema.heading), c_v = column(schema.lon_velocity),
                    c_a = column(schema.lon_acceleration), c_len = column(schema.length);

  std::map<SampleId, std::vector<detail::RawRow>> tracks;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": too few columns");
    SampleId id;
    long long frame;
    try {
      id = std::stoll(cells[c_id]);
      frame = std::llround(parse_double(cells[c_frame]));
    } catch (const std::logic_error&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad frame or track id");
    }
    double heading = parse_double(cells[c_h]);
    if (schema.heading_unit == AngleUnit::kDegrees) heading = heading * kPi / 180.0;
    tracks[id].push_back({frame, parse_double(cells[c_x]), parse_double(cells[c_y]),
                          wrap_angle(heading), parse_double(cells[c_v]),
                          parse_double(cells[c_a]), parse_double(cells[c_len])});
  }
  if (tracks.empty()) throw EmptySetError(path + ": no data rows");

  ManeuverSet set;
  set.maneuver_id = schema.maneuver_id;
  for (auto& [id, rows] : tracks) {
    const std::string who = "track " + std::to_string(id);
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].frame <= rows[i - 1].frame)
        throw DataError(path + ": " + who + " has non-monotone frames");

    std::optional<std::string> reject;
    for (std::size_t i = 1; i < rows.size() && !reject; ++i)
      if (rows[i].frame - rows[i - 1].frame - 1 > detail::kMaxFrameGap)
        reject = who + ": frame gap longer than 3 frames";
    for (const auto& r : rows)
      // Small negative readings on stopped vehicles are sensor noise.
      if (!reject && r.v < -0.1) reject = who + ": reverse driving";
    if (rows.size() < 2 && !reject) reject = who + ": fewer than 2 frames";
    if (reject) {
      if (rejected) rejected->push_back(*reject);
      continue;
    }

    Trajectory traj;
    traj.id = id;
    double length_sum = 0.0;
    const long long frame0 = rows.front().frame;
    const auto push = [&](long long frame, const detail::RawRow& r) {
      traj.points.push_back({static_cast<double>(frame - frame0) / kFrameRate, r.x, r.y,
                             r.heading, std::max(0.0, r.v), r.a});
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0) {
        const auto& p = rows[i - 1];
        const auto& q = rows[i];
        for (long long f = p.frame + 1; f < q.frame; ++f) {
          const double w = static_cast<double>(f - p.frame) / static_cast<double>(q.frame - p.frame);
          detail::RawRow m{f,
                           p.x + w * (q.x - p.x),
                           p.y + w * (q.y - p.y),
                           wrap_angle(p.heading + w * wrap_angle(q.heading - p.heading)),
                           p.v + w * (q.v - p.v),
                           p.a + w * (q.a - p.a),
                           p.length};
          push(f, m);
        }
      }
      push(rows[i].frame, rows[i]);
      length_sum += rows[i].length;
    }
    traj.wheelbase = wheelbase_from_length(length_sum / static_cast<double>(rows.size()));
    traj.validate();
    set.samples.push_back(std::move(traj));
  }
  if (set.samples.empty()) throw EmptySetError(path + ": every track was rejected");
  return set;
}

/// Writes the set in the schema's layout. Lengths are written so that
/// reloading reproduces the stored wheelbase.
inline void write_csv(const ManeuverSet& set, const std::string& path,
                      const CsvSchema& schema = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << schema.frame << ',' << schema.track_id << ',' << schema.x << ',' << schema.y << ','
      << schema.heading << ',' << schema.lon_velocity << ',' << schema.lon_acceleration << ','
      << schema.length << '\n';
  for (const auto& s : set.samples) {
    for (const auto& p : s.points) {
      const double heading =
          schema.heading_unit == AngleUnit::kDegrees ? p.theta * 180.0 / kPi : p.theta;
      out << std::llround(p.t * kFrameRate) << ',' << s.id << ',' << format_double(p.x) << ','
          << format_double(p.y) << ',' << format_double(heading) << ',' << format_double(p.v)
          << ',' << format_double(p.a) << ',' << format_double(s.wheelbase / 0.6) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Rectification

struct Exclusion {
  SampleId id;
  std::string reason;
};

struct RectifyResult {
  ManeuverSet set;
  std::vector<Exclusion> excluded;
};

/// Trajectories shorter than this after trimming are dropped.
inline constexpr double kMinRectifiedDuration = 0.5;

namespace detail {

inline std::size_t medoid_2d(const std::vector<std::pair<double, double>>& pts) {
  std::size_t best = 0;
  double best_sum = kInf;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double sum = 0.0;
    for (const auto& q : pts) sum += std::hypot(pts[i].first - q.first, pts[i].second - q.second);
    if (sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// Circles around the medoids of all first points and of all last points.
inline Gates default_gates(const ManeuverSet& set, double radius = 3.0) {
  if (set.samples.empty()) throw EmptySetError("cannot derive gates of an empty set");
  std::vector<std::pair<double, double>> first, last;
  for (const auto& s : set.samples) {
    first.emplace_back(s.points.front().x, s.points.front().y);
    last.emplace_back(s.points.back().x, s.points.back().y);
  }
  const auto f = first[detail::medoid_2d(first)];
  const auto l = last[detail::medoid_2d(last)];
  return {{f.first, f.second, radius}, {l.first, l.second, radius}};
}

/// Trims every trajectory to run from its first point inside the start
/// gate to its last point inside the end gate, with time re-zeroed.
inline RectifyResult rectify(const ManeuverSet& set, const Gates& gates) {
  RectifyResult result;
  result.set.maneuver_id = set.maneuver_id;
  result.set.gates = gates;
  for (const auto& s : set.samples) {
    const auto& pts = s.points;
    std::optional<std::size_t> first, last;
    for (std::size_t i = 0; i < pts.size() && !first; ++i)
      if (gates.start.contains(pts[i].x, pts[i].y)) first = i;
    for (std::size_t i = pts.size(); i-- > 0 && !last;)
      if (gates.end.contains(pts[i].x, pts[i].y)) last = i;
    if (!first) {
      result.excluded.push_back({s.id, "never enters the start gate"});
      continue;
    }
    if (!last) {
      result.excluded.push_back({s.id, "never enters the end gate"});
      continue;
    }
    if (*last <= *first) {
      result.excluded.push_back({s.id, "leaves the end gate before the start gate"});
      continue;
    }
    Trajectory t;
    t.id = s.id;
    t.wheelbase = s.wheelbase;
    const double t0 = pts[*first].t;
    for (std::size_t i = *first; i <= *last; ++i) {
      auto p = pts[i];
      p.t -= t0;
      t.points.push_back(p);
    }
    if (t.duration() < kMinRectifiedDuration) {
      result.excluded.push_back({s.id, "shorter than 0.5 s after trimming"});
      continue;
    }
    result.set.samples.push_back(std::move(t));
  }
  return result;
}

inline RectifyResult rectify(const ManeuverSet& set) { return rectify(set, default_gates(set)); }

/// Speed sampled at n instants evenly spanning the trajectory.
inline std::vector<double> resample_profile(const Trajectory& traj, std::size_t n) {
  if (n < 2) throw std::invalid_argument("resample_profile needs n >= 2");
  std::vector<double> out(n);
  const double t0 = traj.t_first();
  const double span = traj.duration();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i + 1 == n ? traj.t_last()
                                : t0 + span * static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = traj.at(t).v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline Json gate_to_json(const Gate& g) { return Json{{"x", g.x}, {"y", g.y}, {"radius", g.radius}}; }

inline Gate gate_from_json(const Json& j) {
  return {json_number(j.at("x")), json_number(j.at("y")), json_number(j.at("radius"))};
}

inline Json to_json(const ManeuverSet& set) {
  Json j;
  j["maneuver_id"] = set.maneuver_id;
  if (set.gates)
    j["gates"] = Json{{"start", gate_to_json(set.gates->start)}, {"end", gate_to_json(set.gates->end)}};
  else
    j["gates"] = nullptr;
  Json samples = Json::array();
  for (const auto& s : set.samples) {
    Json pts = Json::array();
    for (const auto& p : s.points) pts.push_back(Json::array({p.t, p.x, p.y, p.theta, p.v, p.a}));
    samples.push_back(Json{{"id", s.id}, {"wheelbase", s.wheelbase}, {"points", std::move(pts)}});
  }
  j["samples"] = std::move(samples);
  return j;
}

inline ManeuverSet maneuver_set_from_json(const Json& j) {
  ManeuverSet set;
  try {
    set.maneuver_id = j.at("maneuver_id").get<std::string>();
    if (j.contains("gates") && !j.at("gates").is_null())
      set.gates = Gates{gate_from_json(j.at("gates").at("start")),
                        gate_from_json(j.at("gates").at("end"))};
    for (const auto& js : j.at("samples")) {
      Trajectory t;
      t.id = js.at("id").get<SampleId>();
      t.wheelbase = json_number(js.at("wheelbase"));
      for (const auto& p : js.at("points")) {
        if (p.size() != 6) throw DataError("point must have 6 entries");
        t.points.push_back({json_number(p[0]), json_number(p[1]), json_number(p[2]),
                            json_number(p[3]), json_number(p[4]), json_number(p[5])});
      }
      set.samples.push_back(std::move(t));
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed maneuver set: ") + e.what());
  }
  set.sort_by_id();
  set.validate();
  return set;
}

inline ManeuverSet load_maneuver_json(const std::string& path) {
  return maneuver_set_from_json(read_json_file(path));
}

inline void save_maneuver_json(const ManeuverSet& set, const std::string& path) {
  write_text_file(path, dump_json(to_json(set)));
}

}  // namespace trajclust
