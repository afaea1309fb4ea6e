#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trajclust/cluster.hpp"
#include "trajclust/common.hpp"
#include "trajclust/init.hpp"
#include "trajclust/json_io.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

inline constexpr double kBrakeThreshold = -2.0;  // m/s^2
inline constexpr double kAccelThreshold = 1.5;   // m/s^2
inline constexpr double kSlowThreshold = 1.0;    // m/s

struct AssertivenessFeatures {
  double v0 = 0.0;
  double t_brake = 0.0;
  double t_accel = 0.0;
};

struct InteractionFeatures {
  double v_reduction = 1.0;
  double t_slow = 0.0;
};

namespace detail {

inline double start_speed(const Trajectory& t) {
  if (t.points.empty()) throw FeatureError("trajectory " + std::to_string(t.id) + " has no points");
  const double v0 = t.points.front().v;
  if (!(v0 > 0.0)) throw FeatureError("trajectory " + std::to_string(t.id) + " starts at rest");
  return v0;
}

}  // namespace detail

/// Per-point thresholds; durations count one frame (0.04 s) per point.
inline AssertivenessFeatures assertiveness_features(const Trajectory& t) {
  AssertivenessFeatures f;
  f.v0 = detail::start_speed(t);
  for (const auto& p : t.points) {
    if (p.a < kBrakeThreshold) f.t_brake += kFrameStep;
    if (p.a > kAccelThreshold) f.t_accel += kFrameStep;
  }
  return f;
}

inline InteractionFeatures interaction_features(const Trajectory& t) {
  InteractionFeatures f;
  const double v0 = detail::start_speed(t);
  double vmin = v0;
  for (const auto& p : t.points) {
    vmin = std::min(vmin, p.v);
    if (p.v < kSlowThreshold) f.t_slow += kFrameStep;
  }
  f.v_reduction = std::clamp(vmin / v0, 0.0, 1.0);
  return f;
}

/// Result of grouping cluster centroids along one behavior dimension.
struct Grouping {
  std::vector<std::size_t> labels;        // class index per centroid, 0 = first class
  std::vector<std::string> class_names;   // by class index
  std::size_t requested = 0;
  std::size_t effective = 0;              // below `requested` when centroids coincide
};

namespace detail {

/// Agglomerates z-scored feature rows into at most k groups; identical rows
/// always share a group. Returns raw group labels and the group count.
inline std::vector<std::size_t> group_rows(const Eigen::MatrixXd& raw, std::size_t k, std::size_t* effective) {
  const auto n = static_cast<std::size_t>(raw.rows());
  if (n == 0) throw std::invalid_argument("no centroids to group");
  if (k < 1) throw std::invalid_argument("need at least one group");
  std::set<std::vector<double>> distinct;
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < raw.cols(); ++c) row.push_back(raw(i, c));
    distinct.insert(row);
  }
  const std::size_t keff = std::min(k, distinct.size());
  *effective = keff;
  return agglomerative_labels(pairwise_distance(zscore_columns(raw)), keff);
}

/// Renumbers groups so that a larger `key` comes first (ties: first appearance).
inline std::vector<std::size_t> order_groups_by(const std::vector<std::size_t>& labels,
                                                const std::vector<double>& key, std::size_t groups) {
  std::vector<double> sum(groups, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sum[labels[i]] += key[i];
    ++count[labels[i]];
  }
  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sum[a] / static_cast<double>(count[a]) > sum[b] / static_cast<double>(count[b]);
  });
  std::vector<std::size_t> rank(groups);
  for (std::size_t r = 0; r < groups; ++r) rank[order[r]] = r;
  std::vector<std::size_t> out;
  for (auto l : labels) out.push_back(rank[l]);
  return out;
}

}  // namespace detail

/// Names for assertiveness classes from fastest to slowest.
inline std::vector<std::string> assertiveness_names(std::size_t k) {
  if (k == 1) return {"normal"};
  std::vector<std::string> names{"aggressive"};
  for (std::size_t i = 0; i + 2 < k; ++i) names.push_back("normal " + std::to_string(i));
  names.push_back("conservative");
  return names;
}

/// Groups centroids by (v0, t_brake, t_accel); classes are ordered by
/// descending mean speed of their centroids.
inline Grouping group_assertiveness(const std::vector<const Trajectory*>& centroids, std::size_t k) {
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(centroids.size()), 3);
  std::vector<double> mean_v;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const auto f = assertiveness_features(*centroids[i]);
    raw.row(static_cast<Eigen::Index>(i)) << f.v0, f.t_brake, f.t_accel;
    mean_v.push_back(centroids[i]->mean_speed());
  }
  Grouping g;
  g.requested = k;
  const auto labels = detail::group_rows(raw, k, &g.effective);
  g.labels = detail::order_groups_by(labels, mean_v, g.effective);
  g.class_names = assertiveness_names(g.effective);
  return g;
}

/// Groups centroids by (v_reduction, t_slow); class 0 slows down least.
inline Grouping group_interaction(const std::vector<const Trajectory*>& centroids, std::size_t k) {
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(centroids.size()), 2);
  std::vector<double> reduction;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const auto f = interaction_features(*centroids[i]);
    raw.row(static_cast<Eigen::Index>(i)) << f.v_reduction, f.t_slow;
    reduction.push_back(f.v_reduction);
  }
  Grouping g;
  g.requested = k;
  const auto labels = detail::group_rows(raw, k, &g.effective);
  g.labels = detail::order_groups_by(labels, reduction, g.effective);
  for (std::size_t i = 0; i < g.effective; ++i) g.class_names.push_back("interaction " + std::to_string(i));
  return g;
}

inline std::vector<const Trajectory*> centroid_trajectories(const Clustering& c, const ManeuverSet& set) {
  std::vector<const Trajectory*> out;
  for (const auto& cl : c.clusters) out.push_back(&set.by_id(cl.centroid));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

/// Davies-Bouldin index over feature rows, with each cluster's medoid as
/// its center. Coinciding centers with any scatter give +inf.
inline double davies_bouldin(const FeatureMatrix& f, const Clustering& c) {
  if (c.size() < 2) throw MetricError("Davies-Bouldin needs at least two clusters");
  std::map<SampleId, Eigen::Index> row;
  for (std::size_t i = 0; i < f.ids.size(); ++i) row[f.ids[i]] = static_cast<Eigen::Index>(i);
  const auto at = [&](SampleId id) {
    auto it = row.find(id);
    if (it == row.end()) throw MetricError("sample " + std::to_string(id) + " has no feature row");
    return f.rows.row(it->second);
  };
  std::vector<Eigen::VectorXd> centers;
  std::vector<double> scatter;
  for (const auto& cl : c.clusters) {
    SampleId best = cl.members.front();
    double best_sum = kInf;
    for (SampleId m : cl.members) {
      double sum = 0.0;
      for (SampleId o : cl.members) sum += (at(m) - at(o)).norm();
      if (sum < best_sum) {
        best_sum = sum;
        best = m;
      }
    }
    centers.emplace_back(at(best).transpose());
    double s = 0.0;
    for (SampleId m : cl.members) s += (at(m).transpose() - centers.back()).norm();
    scatter.push_back(s / static_cast<double>(cl.members.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      if (i == j) continue;
      const double sep = (centers[i] - centers[j]).norm();
      const double spread = scatter[i] + scatter[j];
      const double r = sep > 0.0 ? spread / sep : (spread > 0.0 ? kInf : 0.0);
      worst = std::max(worst, r);
    }
    total += worst;
  }
  return total / static_cast<double>(centers.size());
}

inline std::size_t count_infinite_nll(const Clustering& c, ComparisonCache& cache) {
  return summarize(c, cache).n_inf;
}

/// Adjusted Rand index of two labelings of the same items.
template <typename A, typename B>
double adjusted_rand_index(const std::vector<A>& a, const std::vector<B>& b) {
  if (a.size() != b.size()) throw MetricError("label vectors differ in length");
  const auto n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<A, B>, double> joint;
  std::map<A, double> ra;
  std::map<B, double> rb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  const auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : joint) index += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(n));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;  // both trivial partitions
  return (index - expected) / (max_index - expected);
}

/// ARI between a clustering and ground-truth labels keyed by sample id.
inline double adjusted_rand_index(const Clustering& c, const std::map<SampleId, std::string>& truth) {
  const auto assign = c.assignment();
  std::vector<std::size_t> pred;
  std::vector<std::string> gt;
  for (const auto& [id, k] : assign) {
    auto it = truth.find(id);
    if (it == truth.end()) throw MetricError("no label for sample " + std::to_string(id));
    pred.push_back(k);
    gt.push_back(it->second);
  }
  if (truth.size() != assign.size()) throw MetricError("labels and clustering cover different samples");
  return adjusted_rand_index(pred, gt);
}

// ---------------------------------------------------------------------------
// Profile report

struct ProfileReport {
  Grouping assertiveness;
  Grouping interaction;
  long implied_c = 0;  // n_k - n_a * n_i
};

inline ProfileReport build_profiles(const Clustering& c, const ManeuverSet& set, std::size_t n_a,
                                    std::size_t n_i) {
  const auto cents = centroid_trajectories(c, set);
  ProfileReport r;
  r.assertiveness = group_assertiveness(cents, n_a);
  r.interaction = group_interaction(cents, n_i);
  r.implied_c = static_cast<long>(c.size()) -
                static_cast<long>(r.assertiveness.effective * r.interaction.effective);
  return r;
}

/// Per-cluster features, class labels, and centroid speed profiles ordered
/// by assertiveness class.
inline Json profiles_to_json(const Clustering& c, const ManeuverSet& set, const ProfileReport& r) {
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return r.assertiveness.labels[x] < r.assertiveness.labels[y];
  });
  Json clusters = Json::array();
  for (std::size_t k : order) {
    const auto& cl = c.clusters[k];
    const auto& traj = set.by_id(cl.centroid);
    const auto af = assertiveness_features(traj);
    const auto inf = interaction_features(traj);
    std::vector<double> t, v;
    for (const auto& p : traj.points) {
      t.push_back(p.t - traj.t_first());
      v.push_back(p.v);
    }
    clusters.push_back(Json{
        {"cluster", k},
        {"centroid_id", cl.centroid},
        {"size", cl.members.size()},
        {"assertiveness", {{"v0", af.v0}, {"t_brake", af.t_brake}, {"t_accel", af.t_accel}}},
        {"interaction", {{"v_reduction", inf.v_reduction}, {"t_slow", inf.t_slow}}},
        {"assertiveness_class", r.assertiveness.class_names[r.assertiveness.labels[k]]},
        {"interaction_class", r.interaction.class_names[r.interaction.labels[k]]},
        {"profile", {{"t", t}, {"v", v}}}});
  }
  return Json{{"n_k", c.size()},
              {"assertiveness_classes", {{"requested", r.assertiveness.requested},
                                         {"effective", r.assertiveness.effective},
                                         {"names", r.assertiveness.class_names}}},
              {"interaction_classes", {{"requested", r.interaction.requested},
                                       {"effective", r.interaction.effective},
                                       {"names", r.interaction.class_names}}},
              {"implied_c", r.implied_c},
              {"clusters", std::move(clusters)}};
}

}  // namespace trajclust
