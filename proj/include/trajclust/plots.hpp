#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trajclust/cluster.hpp"
#include "trajclust/common.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

/// Long-format speed profiles of every member: sample_id,t,v (t from the sample's start).
inline std::string profile_csv(const Cluster& cl, const ManeuverSet& set) {
  std::string out = "sample_id,t,v\n";
  for (SampleId m : cl.members) {
    const auto& traj = set.by_id(m);
    for (const auto& p : traj.points)
      out += std::to_string(m) + ',' + format_double(p.t - traj.t_first()) + ',' + format_double(p.v) + '\n';
  }
  return out;
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,x,y,theta,v,a\n";
  for (const auto& p : traj.points)
    out += format_double(p.t - traj.t_first()) + ',' + format_double(p.x) + ',' + format_double(p.y) + ',' +
           format_double(p.theta) + ',' + format_double(p.v) + ',' + format_double(p.a) + '\n';
  return out;
}

/// Visit counts on a square grid; cells are keyed by integer index
/// floor(coordinate / bin).
struct HeatMap {
  double bin = 0.5;
  std::map<std::pair<long, long>, std::size_t> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [cell, c] : counts) n += c;
    return n;
  }
};

inline HeatMap heatmap(const Cluster& cl, const ManeuverSet& set, double bin = 0.5) {
  if (!(bin > 0.0)) throw std::invalid_argument("heat-map bin must be positive");
  HeatMap h;
  h.bin = bin;
  for (SampleId m : cl.members)
    for (const auto& p : set.by_id(m).points)
      ++h.counts[{static_cast<long>(std::floor(p.x / bin)), static_cast<long>(std::floor(p.y / bin))}];
  return h;
}

/// Non-empty cells: ix,iy,x_min,y_min,count.
inline std::string heatmap_csv(const HeatMap& h) {
  std::string out = "ix,iy,x_min,y_min,count\n";
  for (const auto& [cell, c] : h.counts)
    out += std::to_string(cell.first) + ',' + std::to_string(cell.second) + ',' +
           format_double(static_cast<double>(cell.first) * h.bin) + ',' +
           format_double(static_cast<double>(cell.second) * h.bin) + ',' + std::to_string(c) + '\n';
  return out;
}

}  // namespace trajclust
