#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <utility>
#include <vector>

#include "trajclust/common.hpp"
#include "trajclust/ekfsim.hpp"
#include "trajclust/json_io.hpp"
#include "trajclust/trajdata.hpp"

namespace trajclust {

// ---------------------------------------------------------------------------
// Comparison cache

/// Memoizes compare(sample, centroid). Lookups may run from several threads;
/// each pair is computed at most once, other callers wait for that result.
class ComparisonCache {
 public:
  ComparisonCache(const ManeuverSet& set, EkfConfig cfg, unsigned threads = 1)
      : set_(&set), cfg_(cfg), threads_(std::max(1u, threads)) {
    cfg_.validate();
  }

  ComparisonCache(const ComparisonCache&) = delete;
  ComparisonCache& operator=(const ComparisonCache&) = delete;

  const MembershipSeries& series(SampleId sample, SampleId centroid) {
    const Key key{sample, centroid};
    std::promise<Value> promise;
    std::shared_future<Value> future;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(std::make_shared<const MembershipSeries>(
            compare(set_->by_id(sample), set_->by_id(centroid), cfg_)));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return *future.get();
  }

  double nll(SampleId sample, SampleId centroid) { return series(sample, centroid).nll; }

  /// Stores a precomputed result (e.g. from an earlier run). Existing
  /// entries are kept; returns whether the value was stored.
  bool insert(SampleId sample, SampleId centroid, MembershipSeries value) {
    std::promise<Value> promise;
    promise.set_value(std::make_shared<const MembershipSeries>(std::move(value)));
    std::lock_guard lock(mutex_);
    return entries_.emplace(Key{sample, centroid}, promise.get_future().share()).second;
  }

  /// Computes every missing pair, spread over the worker threads.
  void prefetch(const std::vector<std::pair<SampleId, SampleId>>& pairs) {
    std::vector<std::pair<SampleId, SampleId>> missing;
    {
      std::lock_guard lock(mutex_);
      for (const auto& p : pairs)
        if (!entries_.count(p)) missing.push_back(p);
    }
    if (missing.empty()) return;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(threads_, missing.size()));
    if (workers <= 1) {
      for (const auto& [s, c] : missing) series(s, c);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < missing.size(); i = next++)
            series(missing[i].first, missing[i].second);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  /// Every ordered pair (a, b) with a in `samples`, b in `centroids`.
  void prefetch(const std::vector<SampleId>& samples, const std::vector<SampleId>& centroids) {
    std::vector<std::pair<SampleId, SampleId>> pairs;
    pairs.reserve(samples.size() * centroids.size());
    for (SampleId s : samples)
      for (SampleId c : centroids) pairs.emplace_back(s, c);
    prefetch(pairs);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

  const ManeuverSet& set() const { return *set_; }
  const EkfConfig& config() const { return cfg_; }
  unsigned threads() const { return threads_; }

 private:
  using Key = std::pair<SampleId, SampleId>;
  using Value = std::shared_ptr<const MembershipSeries>;

  const ManeuverSet* set_;
  EkfConfig cfg_;
  unsigned threads_;
  mutable std::mutex mutex_;
  std::map<Key, std::shared_future<Value>> entries_;
};

// ---------------------------------------------------------------------------
// Clustering state

struct Cluster {
  SampleId centroid = 0;
  std::vector<SampleId> members;  // sorted, contains centroid

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct Clustering {
  std::vector<Cluster> clusters;
  std::size_t generation = 0;

  /// Sorts members and orders clusters by centroid id.
  void normalize() {
    for (auto& c : clusters) std::sort(c.members.begin(), c.members.end());
    std::sort(clusters.begin(), clusters.end(),
              [](const Cluster& a, const Cluster& b) { return a.centroid < b.centroid; });
  }

  std::size_t size() const { return clusters.size(); }

  bool same_partition(const Clustering& o) const { return clusters == o.clusters; }

  /// Cluster index of every sample.
  std::map<SampleId, std::size_t> assignment() const {
    std::map<SampleId, std::size_t> out;
    for (std::size_t k = 0; k < clusters.size(); ++k)
      for (SampleId m : clusters[k].members) out[m] = k;
    return out;
  }

  SampleId centroid_of(SampleId sample) const {
    for (const auto& c : clusters)
      if (std::binary_search(c.members.begin(), c.members.end(), sample)) return c.centroid;
    throw DataError("sample " + std::to_string(sample) + " is not clustered");
  }

  /// Throws when clusters are not a partition of `ids` with valid centroids.
  void validate(const std::vector<SampleId>& ids) const {
    std::set<SampleId> seen;
    for (const auto& c : clusters) {
      if (c.members.empty()) throw DataError("empty cluster");
      if (!std::binary_search(c.members.begin(), c.members.end(), c.centroid))
        throw DataError("centroid " + std::to_string(c.centroid) + " outside its cluster");
      for (SampleId m : c.members)
        if (!seen.insert(m).second) throw DataError("sample " + std::to_string(m) + " in two clusters");
    }
    const std::set<SampleId> all(ids.begin(), ids.end());
    if (seen != all) throw DataError("clusters do not cover the sample set");
  }

  /// FNV-1a over centroids and members of the normalized clustering.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    const auto mix = [&](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    for (const auto& c : clusters) {
      mix(static_cast<std::uint64_t>(c.centroid));
      mix(c.members.size());
      for (SampleId m : c.members) mix(static_cast<std::uint64_t>(m));
    }
    return h;
  }
};

/// Builds a clustering from a label per sample (aligned with `ids`); the
/// centroid of each group is its lowest id until maximized.
inline Clustering clustering_from_labels(const std::vector<SampleId>& ids,
                                         const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::vector<SampleId>> groups;
  for (std::size_t i = 0; i < ids.size(); ++i) groups[labels.at(i)].push_back(ids[i]);
  Clustering c;
  for (auto& [label, members] : groups) {
    std::sort(members.begin(), members.end());
    c.clusters.push_back({members.front(), members});
  }
  c.normalize();
  return c;
}

/// Which centroid's membership series weights the divergence terms.
enum class KlWeighting {
  kFine,  // the finer partition's centroid: new halves on split, own clusters on merge
  kOld,   // sum p_old ln(p_old / p_new)
  kNew,   // sum p_new ln(p_new / p_old)
};

struct ClusterConfig {
  double t_kl = 3.0;
  KlWeighting kl_weighting = KlWeighting::kFine;
  std::size_t max_em_iters = 50;
  std::size_t max_outer_iters = 100;
  double candidate_fraction = 0.3;     // centroid candidates kept for large clusters
  std::size_t candidate_threshold = 100;
  std::size_t min_split_size = 4;
};

// ---------------------------------------------------------------------------
// EM steps

/// Sum over samples of nll to the centroid of their cluster.
inline double objective(const Clustering& c, ComparisonCache& cache) {
  double sum = 0.0;
  for (const auto& cl : c.clusters)
    for (SampleId m : cl.members) sum += cache.nll(m, cl.centroid);
  return sum;
}

/// Assigns every sample to the centroid of lowest nll (ties: lowest
/// centroid id). Centroids keep themselves; a sample infinitely far from
/// every centroid opens its own singleton cluster.
inline Clustering allocate(const std::vector<SampleId>& ids, const std::vector<SampleId>& centroids,
                           ComparisonCache& cache) {
  if (centroids.empty()) throw std::invalid_argument("allocate needs at least one centroid");
  std::vector<SampleId> cents = centroids;
  std::sort(cents.begin(), cents.end());
  cache.prefetch(ids, cents);

  std::map<SampleId, Cluster> by_centroid;
  for (SampleId c : cents) by_centroid[c] = Cluster{c, {}};
  std::vector<Cluster> singletons;
  for (SampleId s : ids) {
    if (by_centroid.count(s)) {
      by_centroid[s].members.push_back(s);
      continue;
    }
    SampleId best = cents.front();
    double best_nll = kInf;
    for (SampleId c : cents) {
      const double v = cache.nll(s, c);
      if (v < best_nll) {
        best_nll = v;
        best = c;
      }
    }
    if (std::isinf(best_nll)) {
      singletons.push_back({s, {s}});
    } else {
      by_centroid[best].members.push_back(s);
    }
  }
  Clustering out;
  for (auto& [c, cl] : by_centroid) out.clusters.push_back(std::move(cl));
  for (auto& s : singletons) out.clusters.push_back(std::move(s));
  out.normalize();
  return out;
}

namespace detail {

/// Candidate centroids: every member, or for large clusters the current
/// centroid plus the closest members by nll to it.
inline std::vector<SampleId> centroid_candidates(const Cluster& cl, ComparisonCache& cache,
                                                 const ClusterConfig& cfg) {
  if (cl.members.size() <= cfg.candidate_threshold) return cl.members;
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.candidate_fraction * static_cast<double>(cl.members.size()))));
  cache.prefetch(cl.members, {cl.centroid});
  std::vector<std::pair<double, SampleId>> ranked;
  for (SampleId m : cl.members)
    if (m != cl.centroid) ranked.emplace_back(cache.nll(m, cl.centroid), m);
  std::sort(ranked.begin(), ranked.end());
  std::vector<SampleId> out{cl.centroid};
  for (std::size_t i = 0; i < ranked.size() && out.size() < keep; ++i) out.push_back(ranked[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Member minimizing the summed nll of all members against it.
inline SampleId maximize_centroid(const Cluster& cl, ComparisonCache& cache,
                                  const ClusterConfig& cfg, std::size_t* evaluated = nullptr) {
  if (cl.members.empty()) throw std::invalid_argument("maximize_centroid on an empty cluster");
  if (cl.members.size() == 1) {
    if (evaluated) *evaluated = 1;
    return cl.members.front();
  }
  const auto candidates = detail::centroid_candidates(cl, cache, cfg);
  if (evaluated) *evaluated = candidates.size();
  cache.prefetch(cl.members, candidates);
  SampleId best = candidates.front();
  double best_sum = kInf;
  bool found = false;
  for (SampleId c : candidates) {
    double sum = 0.0;
    for (SampleId m : cl.members) sum += cache.nll(m, c);
    if (!found || sum < best_sum) {
      best = c;
      best_sum = sum;
      found = true;
    }
  }
  return best;
}

enum class EmStep { kAllocate, kMaximize };

/// Called after every EM half-step with the resulting clustering.
using EmObserver = std::function<void(EmStep, const Clustering&)>;

struct EmResult {
  Clustering clustering;
  bool converged = false;
  std::size_t iterations = 0;
};

inline std::vector<SampleId> centroids_of(const Clustering& c) {
  std::vector<SampleId> out;
  for (const auto& cl : c.clusters) out.push_back(cl.centroid);
  return out;
}

inline std::vector<SampleId> members_of(const Clustering& c) {
  std::vector<SampleId> out;
  for (const auto& cl : c.clusters) out.insert(out.end(), cl.members.begin(), cl.members.end());
  std::sort(out.begin(), out.end());
  return out;
}

/// Alternates allocation and centroid maximization until a fixed point.
inline EmResult em_loop(const Clustering& init, ComparisonCache& cache, const ClusterConfig& cfg,
                        const EmObserver& observer = {}) {
  const auto ids = members_of(init);
  EmResult result;
  Clustering current = init;
  current.normalize();
  for (std::size_t it = 0; it < cfg.max_em_iters; ++it) {
    Clustering next = allocate(ids, centroids_of(current), cache);
    if (observer) observer(EmStep::kAllocate, next);
    for (auto& cl : next.clusters) cl.centroid = maximize_centroid(cl, cache, cfg);
    next.normalize();
    if (observer) observer(EmStep::kMaximize, next);
    next.generation = current.generation;
    result.iterations = it + 1;
    if (next.same_partition(current)) {
      result.converged = true;
      result.clustering = std::move(next);
      return result;
    }
    current = std::move(next);
  }
  result.clustering = std::move(current);
  return result;
}

// ---------------------------------------------------------------------------
// KL divergence split / merge

/// Time-averaged divergence of membership under `from` relative to `to`:
/// mean over update index t of sum_j p_j(t|from) ln(p_j(t|from) / p_j(t|to)).
/// Series are truncated to the shortest one involved.
inline double kl_divergence_series(const std::vector<SampleId>& members, SampleId from, SampleId to,
                                   ComparisonCache& cache) {
  if (members.empty() || from == to) return 0.0;
  std::vector<std::pair<SampleId, SampleId>> pairs;
  for (SampleId m : members) {
    pairs.emplace_back(m, from);
    pairs.emplace_back(m, to);
  }
  cache.prefetch(pairs);
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (SampleId m : members)
    len = std::min({len, cache.series(m, from).probs.size(), cache.series(m, to).probs.size()});
  if (len == 0) return 0.0;
  const double floor = cache.config().p_floor;
  double total = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    double d = 0.0;
    for (SampleId m : members) {
      const double p = cache.series(m, from).probs[t];
      const double q = cache.series(m, to).probs[t];
      if (p <= 0.0 || p == q) continue;
      if (q <= floor) return kInf;
      d += p * std::log(p / q);
    }
    total += d;
  }
  return total / static_cast<double>(len);
}

/// Divergence between a cluster's old and new centroid under the configured
/// weighting. `splitting` tells whether the new centroid belongs to the finer
/// partition (split) or the coarser one (merge).
inline double centroid_divergence(const std::vector<SampleId>& members, SampleId old_centroid,
                                  SampleId new_centroid, bool splitting, ComparisonCache& cache,
                                  const ClusterConfig& cfg) {
  bool old_weighted = cfg.kl_weighting == KlWeighting::kOld;
  if (cfg.kl_weighting == KlWeighting::kFine) old_weighted = !splitting;
  return old_weighted ? kl_divergence_series(members, old_centroid, new_centroid, cache)
                      : kl_divergence_series(members, new_centroid, old_centroid, cache);
}

namespace detail {

inline double symmetric_nll(SampleId a, SampleId b, ComparisonCache& cache) {
  if (a == b) return 0.0;
  return 0.5 * (cache.nll(a, b) + cache.nll(b, a));
}

/// Sum of distances where any infinite term dominates every finite total.
struct Cost {
  std::size_t n_inf = 0;
  double finite = 0.0;
  void add(double d) {
    if (std::isinf(d)) {
      ++n_inf;
    } else {
      finite += d;
    }
  }
  bool operator<(const Cost& o) const {
    return n_inf != o.n_inf ? n_inf < o.n_inf : finite < o.finite;
  }
};

/// |a - b|, infinite as soon as either side is.
inline double divergence_gap(double a, double b) {
  if (std::isinf(a) || std::isinf(b)) return kInf;
  return std::abs(a - b);
}

}  // namespace detail

/// Two-medoids partition of `members` over the symmetrized nll. Seeds are
/// the most distant pair (infinite counts as farthest).
inline std::pair<std::vector<SampleId>, std::vector<SampleId>> two_medoids(
    const std::vector<SampleId>& members, ComparisonCache& cache) {
  if (members.size() < 2) throw std::invalid_argument("two_medoids needs two members");
  cache.prefetch(members, members);
  const std::size_t n = members.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d[i * n + j] = d[j * n + i] = detail::symmetric_nll(members[i], members[j], cache);

  std::size_t m0 = 0, m1 = 1;
  double far = -1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (d[i * n + j] > far) {
        far = d[i * n + j];
        m0 = i;
        m1 = j;
      }

  std::vector<int> side(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i == m0 || i == m1) {
        side[i] = i == m0 ? 0 : 1;
        continue;
      }
      const double a = d[i * n + m0], b = d[i * n + m1];
      side[i] = b < a ? 1 : 0;
    }
    const auto best_medoid = [&](int s) {
      std::size_t best = n;
      detail::Cost best_cost;
      for (std::size_t i = 0; i < n; ++i) {
        if (side[i] != s) continue;
        detail::Cost c;
        for (std::size_t j = 0; j < n; ++j)
          if (side[j] == s) c.add(d[i * n + j]);
        if (best == n || c < best_cost) {
          best = i;
          best_cost = c;
        }
      }
      return best;
    };
    const std::size_t n0 = best_medoid(0), n1 = best_medoid(1);
    if (n0 == m0 && n1 == m1) break;
    m0 = n0;
    m1 = n1;
  }
  std::pair<std::vector<SampleId>, std::vector<SampleId>> halves;
  for (std::size_t i = 0; i < n; ++i) (side[i] == 0 ? halves.first : halves.second).push_back(members[i]);
  return halves;
}

struct SplitDecision {
  bool attempted = false;
  bool accepted = false;
  double divergence0 = 0.0;
  double divergence1 = 0.0;
  double gap = 0.0;
  Cluster first;
  Cluster second;
};

/// Evaluates splitting `cl` in two; the split is accepted when the average
/// divergences of the two halves (each half's new centroid against the
/// parent centroid) differ by at least t_kl.
inline SplitDecision evaluate_split(const Cluster& cl, ComparisonCache& cache, const ClusterConfig& cfg) {
  SplitDecision out;
  if (cl.members.size() < cfg.min_split_size) return out;
  auto [h0, h1] = two_medoids(cl.members, cache);
  if (h0.size() < 2 || h1.size() < 2) return out;
  out.attempted = true;
  out.first = {h0.front(), h0};
  out.second = {h1.front(), h1};
  out.first.centroid = maximize_centroid(out.first, cache, cfg);
  out.second.centroid = maximize_centroid(out.second, cache, cfg);
  out.divergence0 = centroid_divergence(h0, cl.centroid, out.first.centroid, true, cache, cfg);
  out.divergence1 = centroid_divergence(h1, cl.centroid, out.second.centroid, true, cache, cfg);
  out.gap = detail::divergence_gap(out.divergence0, out.divergence1);
  out.accepted = out.gap >= cfg.t_kl;
  return out;
}

inline std::optional<std::pair<Cluster, Cluster>> try_split(const Cluster& cl, ComparisonCache& cache,
                                                            const ClusterConfig& cfg) {
  auto d = evaluate_split(cl, cache, cfg);
  if (!d.accepted) return std::nullopt;
  return std::make_pair(std::move(d.first), std::move(d.second));
}

struct MergeDecision {
  bool accepted = false;
  double divergence_a = 0.0;
  double divergence_b = 0.0;
  double gap = 0.0;
  Cluster merged;
};

/// Evaluates merging `a` and `b`: the union gets its own best centroid and
/// the merge is accepted when the divergences of a and b (own centroid
/// against the merged one) differ by less than t_kl.
inline MergeDecision evaluate_merge(const Cluster& a, const Cluster& b, ComparisonCache& cache,
                                    const ClusterConfig& cfg) {
  MergeDecision out;
  std::vector<SampleId> all = a.members;
  all.insert(all.end(), b.members.begin(), b.members.end());
  std::sort(all.begin(), all.end());
  const bool a_leads = a.members.size() > b.members.size() ||
                       (a.members.size() == b.members.size() && a.centroid < b.centroid);
  out.merged = {a_leads ? a.centroid : b.centroid, all};
  out.merged.centroid = maximize_centroid(out.merged, cache, cfg);
  out.divergence_a = centroid_divergence(a.members, a.centroid, out.merged.centroid, false, cache, cfg);
  out.divergence_b = centroid_divergence(b.members, b.centroid, out.merged.centroid, false, cache, cfg);
  out.gap = detail::divergence_gap(out.divergence_a, out.divergence_b);
  out.accepted = out.gap < cfg.t_kl;
  return out;
}

inline std::optional<Cluster> try_merge(const Cluster& a, const Cluster& b, ComparisonCache& cache,
                                        const ClusterConfig& cfg) {
  auto d = evaluate_merge(a, b, cache, cfg);
  if (!d.accepted) return std::nullopt;
  return std::move(d.merged);
}

// ---------------------------------------------------------------------------
// Full loop

struct HistoryEntry {
  std::size_t n_k = 0;
  double mu_ll = 0.0;
  double sigma_ll = 0.0;
};

enum class Termination { kConverged, kLoopDetected, kMaxIterations };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kLoopDetected: return "loop_detected";
    case Termination::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

struct ClusterReport {
  double mu_ll = 0.0;
  double sigma_ll = 0.0;
  std::size_t n_k = 0;
  std::size_t n_inf = 0;
  std::vector<HistoryEntry> history;
  Termination termination = Termination::kConverged;
};

/// Mean / standard deviation of finite per-sample nll to own centroid.
inline ClusterReport summarize(const Clustering& c, ComparisonCache& cache) {
  ClusterReport r;
  r.n_k = c.size();
  std::vector<double> finite;
  for (const auto& cl : c.clusters) {
    cache.prefetch(cl.members, {cl.centroid});
    for (SampleId m : cl.members) {
      const double v = cache.nll(m, cl.centroid);
      if (std::isinf(v)) {
        ++r.n_inf;
      } else {
        finite.push_back(v);
      }
    }
  }
  if (!finite.empty()) {
    double sum = 0.0;
    for (double v : finite) sum += v;
    r.mu_ll = sum / static_cast<double>(finite.size());
    double var = 0.0;
    for (double v : finite) var += (v - r.mu_ll) * (v - r.mu_ll);
    r.sigma_ll = std::sqrt(var / static_cast<double>(finite.size()));
  }
  return r;
}

struct PipelineResult {
  Clustering clustering;
  ClusterReport report;
  std::vector<std::uint64_t> state_hashes;  // after every EM convergence
};

namespace detail {

/// First accepted merge among centroid pairs ranked by symmetrized nll.
inline bool merge_pass(Clustering& c, ComparisonCache& cache, const ClusterConfig& cfg) {
  if (c.size() < 2) return false;
  const auto cents = centroids_of(c);
  cache.prefetch(cents, cents);
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j)
      pairs.emplace_back(symmetric_nll(c.clusters[i].centroid, c.clusters[j].centroid, cache), i, j);
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  for (const auto& [dist, i, j] : pairs) {
    auto merged = try_merge(c.clusters[i], c.clusters[j], cache, cfg);
    if (!merged) continue;
    c.clusters.erase(c.clusters.begin() + static_cast<std::ptrdiff_t>(j));
    c.clusters[i] = std::move(*merged);
    c.normalize();
    return true;
  }
  return false;
}

/// Applies every accepted split.
inline bool split_pass(Clustering& c, ComparisonCache& cache, const ClusterConfig& cfg) {
  std::vector<Cluster> next;
  bool changed = false;
  for (const auto& cl : c.clusters) {
    if (auto halves = try_split(cl, cache, cfg)) {
      next.push_back(std::move(halves->first));
      next.push_back(std::move(halves->second));
      changed = true;
    } else {
      next.push_back(cl);
    }
  }
  c.clusters = std::move(next);
  c.normalize();
  return changed;
}

}  // namespace detail

/// EM, then a merge pass, then (if nothing merged) a split pass; restarts
/// after any change. Stops when a pass changes nothing, when a previously
/// seen state recurs (returning the best visited state by mu_ll + sigma_ll),
/// or after max_outer_iters.
inline PipelineResult full_pipeline(const Clustering& init, ComparisonCache& cache,
                                    const ClusterConfig& cfg, const EmObserver& observer = {}) {
  const auto ids = members_of(init);
  init.validate(ids);
  PipelineResult result;
  std::vector<std::pair<Clustering, ClusterReport>> visited;
  std::map<std::uint64_t, std::size_t> seen;
  std::vector<HistoryEntry> history;
  Clustering current = init;
  current.normalize();

  const auto finish = [&](Clustering c, ClusterReport r, Termination t) {
    r.history = history;
    r.termination = t;
    result.clustering = std::move(c);
    result.report = std::move(r);
    return result;
  };

  for (std::size_t outer = 0; outer < cfg.max_outer_iters; ++outer) {
    current = em_loop(current, cache, cfg, observer).clustering;
    current.generation = outer;
#ifndef NDEBUG
    current.validate(ids);
#endif
    const auto report = summarize(current, cache);
    history.push_back({report.n_k, report.mu_ll, report.sigma_ll});
    const auto h = current.hash();
    result.state_hashes.push_back(h);
    if (seen.count(h)) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < visited.size(); ++i) {
        const auto& a = visited[i].second;
        const auto& b = visited[best].second;
        if (a.mu_ll + a.sigma_ll < b.mu_ll + b.sigma_ll) best = i;
      }
      return finish(visited[best].first, visited[best].second, Termination::kLoopDetected);
    }
    seen[h] = visited.size();
    visited.emplace_back(current, report);

    bool changed = detail::merge_pass(current, cache, cfg);
    if (!changed) changed = detail::split_pass(current, cache, cfg);
#ifndef NDEBUG
    current.validate(ids);
#endif
    if (!changed) return finish(current, report, Termination::kConverged);
  }
  return finish(current, summarize(current, cache), Termination::kMaxIterations);
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const HistoryEntry& h) {
  return Json{{"n_k", h.n_k}, {"mu_ll", h.mu_ll}, {"sigma_ll", h.sigma_ll}};
}

inline Json to_json(const Clustering& c, const ClusterReport* report = nullptr) {
  Json j;
  j["generation"] = c.generation;
  Json clusters = Json::array();
  for (const auto& cl : c.clusters)
    clusters.push_back(Json{{"centroid_id", cl.centroid}, {"member_ids", cl.members}});
  j["clusters"] = std::move(clusters);
  if (report) {
    Json history = Json::array();
    for (const auto& h : report->history) history.push_back(to_json(h));
    j["report"] = Json{{"mu_ll", report->mu_ll},
                       {"sigma_ll", report->sigma_ll},
                       {"n_k", report->n_k},
                       {"n_inf", report->n_inf},
                       {"termination", to_string(report->termination)},
                       {"history", std::move(history)}};
  }
  return j;
}

inline Clustering clustering_from_json(const Json& j) {
  Clustering c;
  try {
    c.generation = j.value("generation", std::size_t{0});
    for (const auto& cl : j.at("clusters"))
      c.clusters.push_back({cl.at("centroid_id").get<SampleId>(),
                            cl.at("member_ids").get<std::vector<SampleId>>()});
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed clustering: ") + e.what());
  }
  c.normalize();
  return c;
}

}  // namespace trajclust
