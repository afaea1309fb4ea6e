#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trajclust/cluster.hpp"
#include "trajclust/common.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

/// One row per sample (in id order): resampled speed profile, z-scored per column.
struct FeatureMatrix {
  std::vector<SampleId> ids;
  Eigen::MatrixXd rows;
};

/// Column-wise z-score. Constant columns become zero.
inline Eigen::MatrixXd zscore_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  const auto n = static_cast<double>(m.rows());
  if (m.rows() == 0) return out;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).sum() / n;
    const double var = (m.col(c).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      out.col(c) = (m.col(c).array() - mean) / sd;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

inline constexpr std::size_t kDefaultResample = 50;

inline FeatureMatrix velocity_features(const ManeuverSet& set, std::size_t n = kDefaultResample) {
  if (set.samples.empty()) throw EmptySetError("no samples to build features from");
  FeatureMatrix f;
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(set.samples.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    f.ids.push_back(set.samples[i].id);
    const auto prof = resample_profile(set.samples[i], n);
    for (std::size_t c = 0; c < n; ++c) raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = prof[c];
  }
  f.rows = zscore_columns(raw);
  return f;
}

/// Euclidean distances between rows.
inline Eigen::MatrixXd pairwise_distance(const Eigen::MatrixXd& f) {
  const Eigen::Index n = f.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (f.row(i) - f.row(j)).norm();
  return d;
}

inline Eigen::MatrixXd pairwise_distance(const FeatureMatrix& f) { return pairwise_distance(f.rows); }

namespace detail {

inline void check_k(std::size_t n, std::size_t k) {
  if (k < 1 || k > n)
    throw std::invalid_argument("cluster count " + std::to_string(k) + " outside [1, " +
                                std::to_string(n) + "]");
}

/// Renumbers labels by first appearance so equal partitions get equal labels.
inline std::vector<std::size_t> canonical_labels(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> remap;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(remap.try_emplace(l, remap.size()).first->second);
  return out;
}

}  // namespace detail

/// Average-linkage agglomeration down to k groups. Returns one label per row.
inline std::vector<std::size_t> agglomerative_labels(const Eigen::MatrixXd& d, std::size_t k) {
  const auto n = static_cast<std::size_t>(d.rows());
  detail::check_k(n, k);
  Eigen::MatrixXd link = d;
  std::vector<std::size_t> size(n, 1), label(n);
  std::iota(label.begin(), label.end(), 0);
  std::vector<bool> active(n, true);
  for (std::size_t groups = n; groups > k; --groups) {
    std::size_t bi = 0, bj = 0;
    double best = kInf;
    bool found = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double v = link(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (!found || v < best) {
          best = v;
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    // Lance-Williams update for average linkage.
    const auto ii = static_cast<Eigen::Index>(bi), jj = static_cast<Eigen::Index>(bj);
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == bi || m == bj) continue;
      const auto mm = static_cast<Eigen::Index>(m);
      const double v = (static_cast<double>(size[bi]) * link(ii, mm) + static_cast<double>(size[bj]) * link(jj, mm)) /
                       static_cast<double>(size[bi] + size[bj]);
      link(ii, mm) = link(mm, ii) = v;
    }
    size[bi] += size[bj];
    active[bj] = false;
    for (auto& l : label)
      if (l == bj) l = bi;
  }
  return detail::canonical_labels(label);
}

/// Clustering from row labels; each centroid is the medoid of its group under d.
inline Clustering clustering_with_medoids(const std::vector<SampleId>& ids, const std::vector<std::size_t>& labels,
                                          const Eigen::MatrixXd& d) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  Clustering c;
  for (const auto& [label, rows] : groups) {
    Cluster cl;
    double best = kInf;
    bool found = false;
    for (std::size_t r : rows) {
      cl.members.push_back(ids[r]);
      double sum = 0.0;
      for (std::size_t s : rows) sum += d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s));
      if (!found || sum < best || (sum == best && ids[r] < cl.centroid)) {
        best = sum;
        cl.centroid = ids[r];
        found = true;
      }
    }
    c.clusters.push_back(std::move(cl));
  }
  c.normalize();
  return c;
}

inline Clustering agglomerative(const Eigen::MatrixXd& d, const std::vector<SampleId>& ids, std::size_t k) {
  return clustering_with_medoids(ids, agglomerative_labels(d, k), d);
}

// ---------------------------------------------------------------------------
// PAM

struct PamResult {
  std::vector<std::size_t> medoids;  // row indices
  std::vector<std::size_t> labels;
  std::vector<double> cost_history;  // after build, then after every swap
};

namespace detail {

inline double pam_cost(const Eigen::MatrixXd& d, const std::vector<std::size_t>& medoids,
                       std::vector<std::size_t>* labels = nullptr) {
  double cost = 0.0;
  if (labels) labels->assign(static_cast<std::size_t>(d.rows()), 0);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    double best = kInf;
    for (std::size_t m = 0; m < medoids.size(); ++m) {
      const double v = d(i, static_cast<Eigen::Index>(medoids[m]));
      if (v < best) {
        best = v;
        if (labels) (*labels)[static_cast<std::size_t>(i)] = m;
      }
    }
    cost += best;
  }
  // Duplicate points must not leave a medoid outside its own group.
  if (labels)
    for (std::size_t m = 0; m < medoids.size(); ++m) (*labels)[medoids[m]] = m;
  return cost;
}

}  // namespace detail

/// BUILD then best-improvement SWAP until no swap lowers the cost. The seed
/// only orders the swap scan, which matters for exact ties.
inline PamResult pam_labels(const Eigen::MatrixXd& d, std::size_t k, std::uint64_t seed = 0) {
  const auto n = static_cast<std::size_t>(d.rows());
  detail::check_k(n, k);
  PamResult r;
  std::vector<bool> is_medoid(n, false);
  // BUILD: greedily add the point that lowers the cost most.
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = n;
    double best_cost = kInf;
    for (std::size_t c = 0; c < n; ++c) {
      if (is_medoid[c]) continue;
      auto trial = r.medoids;
      trial.push_back(c);
      const double cost = detail::pam_cost(d, trial);
      if (best == n || cost < best_cost) {
        best = c;
        best_cost = cost;
      }
    }
    r.medoids.push_back(best);
    is_medoid[best] = true;
  }
  double cost = detail::pam_cost(d, r.medoids);
  r.cost_history.push_back(cost);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  for (std::size_t iter = 0; iter < 1000; ++iter) {
    double best_cost = cost;
    std::size_t best_m = k, best_o = n;
    for (std::size_t m = 0; m < k; ++m) {
      for (std::size_t o : order) {
        if (is_medoid[o]) continue;
        auto trial = r.medoids;
        trial[m] = o;
        const double c = detail::pam_cost(d, trial);
        if (c < best_cost - 1e-12 * std::max(1.0, std::abs(cost))) {
          best_cost = c;
          best_m = m;
          best_o = o;
        }
      }
    }
    if (best_m == k) break;
    is_medoid[r.medoids[best_m]] = false;
    is_medoid[best_o] = true;
    r.medoids[best_m] = best_o;
    cost = best_cost;
    r.cost_history.push_back(cost);
  }
  detail::pam_cost(d, r.medoids, &r.labels);
  r.labels = detail::canonical_labels(r.labels);
  return r;
}

inline Clustering pam(const Eigen::MatrixXd& d, const std::vector<SampleId>& ids, std::size_t k,
                      std::uint64_t seed = 0) {
  const auto r = pam_labels(d, k, seed);
  Clustering c;
  std::map<std::size_t, Cluster> by_label;
  std::vector<std::size_t> raw;
  detail::pam_cost(d, r.medoids, &raw);
  for (std::size_t i = 0; i < raw.size(); ++i) by_label[raw[i]].members.push_back(ids[i]);
  for (auto& [m, cl] : by_label) {
    cl.centroid = ids[r.medoids[m]];
    c.clusters.push_back(std::move(cl));
  }
  c.normalize();
  return c;
}

// ---------------------------------------------------------------------------
// Spectral

/// Median of the off-diagonal distances (1 when there are none or all are zero).
inline double median_distance(const Eigen::MatrixXd& d) {
  const Eigen::Index n = d.rows();
  std::vector<double> off;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) off.push_back(d(i, j));
  double sigma = 1.0;
  if (!off.empty()) {
    const auto mid = off.begin() + static_cast<std::ptrdiff_t>(off.size() / 2);
    std::nth_element(off.begin(), mid, off.end());
    double med = *mid;
    if (off.size() % 2 == 0) med = 0.5 * (med + *std::max_element(off.begin(), mid));
    if (med > 0.0) sigma = med;
  }
  return sigma;
}

/// Gaussian affinity exp(-d^2 / (2 sigma^2)); sigma <= 0 selects the median distance.
inline Eigen::MatrixXd gaussian_affinity(const Eigen::MatrixXd& d, double sigma = 0.0) {
  if (!(sigma > 0.0)) sigma = median_distance(d);
  return (-d.array().square() / (2.0 * sigma * sigma)).exp().matrix();
}

/// Lloyd's k-means with k-means++ seeding; best of `restarts` by inertia.
inline std::vector<std::size_t> kmeans_labels(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed,
                                              int restarts = 10) {
  const auto n = static_cast<std::size_t>(x.rows());
  detail::check_k(n, k);
  Rng rng(seed);
  std::vector<std::size_t> best_labels;
  double best_inertia = kInf;
  for (int r = 0; r < restarts; ++r) {
    Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(n)));
    std::vector<double> d2(n, kInf);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
        total += d2[i];
      }
      std::size_t pick = rng.index(n);
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
          u -= d2[i];
          if (u <= 0.0 && d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
      centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    }
    std::vector<std::size_t> labels(n, 0);
    double inertia = kInf;
    for (int iter = 0; iter < 300; ++iter) {
      bool changed = iter == 0;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t bl = 0;
        double bd = kInf;
        for (std::size_t c = 0; c < k; ++c) {
          const double v = (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
          if (v < bd) {
            bd = v;
            bl = c;
          }
        }
        if (labels[i] != bl) changed = true;
        labels[i] = bl;
        inertia += bd;
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), x.cols());
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sums.row(static_cast<Eigen::Index>(labels[i])) += x.row(static_cast<Eigen::Index>(i));
        ++counts[labels[i]];
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) {
          centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        } else {
          // Re-seed an empty cluster at the point farthest from its center.
          std::size_t far = 0;
          double fd = -1.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double v = (x.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(labels[i]))).squaredNorm();
            if (v > fd) {
              fd = v;
              far = i;
            }
          }
          centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(far));
        }
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return detail::canonical_labels(best_labels);
}

struct SpectralResult {
  std::vector<std::size_t> labels;
  bool fell_back = false;
  std::string warning;
};

/// Normalized-Laplacian embedding (k smallest eigenvectors, rows scaled to
/// unit length) clustered by k-means. Falls back to PAM if the eigensolver
/// fails. `sigma` <= 0 uses the median distance as bandwidth.
inline SpectralResult spectral_labels(const Eigen::MatrixXd& d, std::size_t k, std::uint64_t seed = 0,
                                      double sigma = 0.0) {
  const auto n = static_cast<std::size_t>(d.rows());
  detail::check_k(n, k);
  SpectralResult out;
  const Eigen::MatrixXd w = gaussian_affinity(d, sigma);
  const Eigen::VectorXd deg = w.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
  const Eigen::MatrixXd lap =
      Eigen::MatrixXd::Identity(d.rows(), d.cols()) - inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (lap + lap.transpose()));
  if (es.info() != Eigen::Success || !es.eigenvectors().allFinite()) {
    out.fell_back = true;
    out.warning = "spectral: eigen decomposition failed, using pam";
    out.labels = pam_labels(d, k, seed).labels;
    return out;
  }
  Eigen::MatrixXd emb = es.eigenvectors().leftCols(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    const double norm = emb.row(i).norm();
    if (norm > 0.0) emb.row(i) /= norm;
  }
  out.labels = kmeans_labels(emb, k, seed);
  return out;
}

inline Clustering spectral(const Eigen::MatrixXd& d, const std::vector<SampleId>& ids, std::size_t k,
                           std::uint64_t seed = 0, std::string* warning = nullptr, double sigma = 0.0) {
  auto r = spectral_labels(d, k, seed, sigma);
  if (warning) *warning = r.warning;
  return clustering_with_medoids(ids, r.labels, d);
}

// ---------------------------------------------------------------------------
// Initializer selection and sweep

enum class InitMethod { kAgglomerative, kPam, kSpectral };

inline const char* to_string(InitMethod m) {
  switch (m) {
    case InitMethod::kAgglomerative: return "agglomerative";
    case InitMethod::kPam: return "pam";
    case InitMethod::kSpectral: return "spectral";
  }
  return "unknown";
}

inline InitMethod parse_init_method(const std::string& s) {
  if (s == "agglomerative") return InitMethod::kAgglomerative;
  if (s == "pam") return InitMethod::kPam;
  if (s == "spectral") return InitMethod::kSpectral;
  throw ConfigError("unknown init method '" + s + "'");
}

inline Clustering initialize(InitMethod method, const Eigen::MatrixXd& d, const std::vector<SampleId>& ids,
                             std::size_t k, std::uint64_t seed, std::string* warning = nullptr) {
  switch (method) {
    case InitMethod::kAgglomerative: return agglomerative(d, ids, k);
    case InitMethod::kPam: return pam(d, ids, k, seed);
    case InitMethod::kSpectral: return spectral(d, ids, k, seed, warning);
  }
  throw ConfigError("unknown init method");
}

struct SweepRow {
  std::size_t n_k_init = 0;
  double mu_ll = 0.0;
  double sigma_ll = 0.0;
  std::size_t n_k_final = 0;
  std::size_t n_inf = 0;
  Termination termination = Termination::kConverged;
  bool best = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<PipelineResult> runs;
  std::size_t best = 0;
};

/// Runs the full pipeline from each initial cluster count in [k_lo, k_hi] and
/// marks the row with the lowest mu_ll + sigma_ll (ties: smallest count).
inline SweepResult sweep(ComparisonCache& cache, InitMethod method, std::size_t k_lo, std::size_t k_hi,
                         const ClusterConfig& cfg, std::uint64_t seed,
                         std::size_t n_resample = kDefaultResample) {
  if (k_lo < 1 || k_lo > k_hi) throw ConfigError("empty cluster-count range");
  const auto feats = velocity_features(cache.set(), n_resample);
  const auto d = pairwise_distance(feats);
  if (k_hi > feats.ids.size()) throw ConfigError("cluster-count range exceeds sample count");
  SweepResult out;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    auto run = full_pipeline(initialize(method, d, feats.ids, k, seed), cache, cfg);
    SweepRow row;
    row.n_k_init = k;
    row.mu_ll = run.report.mu_ll;
    row.sigma_ll = run.report.sigma_ll;
    row.n_k_final = run.report.n_k;
    row.n_inf = run.report.n_inf;
    row.termination = run.report.termination;
    out.rows.push_back(row);
    out.runs.push_back(std::move(run));
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const auto& a = out.rows[i];
    const auto& b = out.rows[out.best];
    if (a.mu_ll + a.sigma_ll < b.mu_ll + b.sigma_ll) out.best = i;
  }
  out.rows[out.best].best = true;
  return out;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "n_k_i,mu_ll,sigma_ll,n_k_f,n_inf,termination,best\n";
  for (const auto& r : rows)
    out += std::to_string(r.n_k_init) + ',' + format_double(r.mu_ll) + ',' + format_double(r.sigma_ll) + ',' +
           std::to_string(r.n_k_final) + ',' + std::to_string(r.n_inf) + ',' + to_string(r.termination) + ',' +
           (r.best ? "1" : "0") + '\n';
  return out;
}

}  // namespace trajclust
