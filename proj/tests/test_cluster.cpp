#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace trajclust;
using testutil::constant_series;

namespace {

ManeuverSet dummy_set(std::size_t n) {
  ManeuverSet set;
  for (std::size_t i = 0; i < n; ++i)
    set.samples.push_back(testutil::straight_line(static_cast<SampleId>(i), 5.0 + static_cast<double>(i), 1.0));
  return set;
}

/// Fills the cache with nll values from a table (row sample, column centroid).
void fill(ComparisonCache& cache, const std::vector<std::vector<double>>& nll) {
  for (std::size_t s = 0; s < nll.size(); ++s)
    for (std::size_t c = 0; c < nll[s].size(); ++c) {
      auto series = constant_series(1.0, 1);
      series.nll = nll[s][c];
      cache.insert(static_cast<SampleId>(s), static_cast<SampleId>(c), series);
    }
}

struct Scenario {
  LabeledSet data;
  std::vector<SampleId> ids;
};

Scenario straight_data(std::size_t per, std::uint64_t seed) {
  Scenario s{synthesize(testutil::straight_scenario(per), seed), {}};
  s.ids = s.data.set.ids();
  return s;
}

}  // namespace

TEST(Cache, MatchesDirectComparison) {
  const auto d = straight_data(2, 1);
  ComparisonCache cache(d.data.set, EkfConfig{});
  for (SampleId a : d.ids)
    for (SampleId b : d.ids) {
      const auto direct = compare(d.data.set.by_id(a), d.data.set.by_id(b), EkfConfig{});
      EXPECT_EQ(cache.series(a, b).probs, direct.probs);
      EXPECT_EQ(cache.nll(a, b), direct.nll);
    }
  EXPECT_EQ(cache.size(), d.ids.size() * d.ids.size());
}

TEST(Cache, ThreadCountDoesNotChangeResults) {
  const auto d = straight_data(3, 2);
  ComparisonCache one(d.data.set, EkfConfig{}, 1), many(d.data.set, EkfConfig{}, 8);
  many.prefetch(d.ids, d.ids);
  for (SampleId a : d.ids)
    for (SampleId b : d.ids) EXPECT_EQ(one.series(a, b).probs, many.series(a, b).probs);
}

TEST(Cache, InsertKeepsExisting) {
  const auto set = dummy_set(2);
  ComparisonCache cache(set, EkfConfig{});
  EXPECT_TRUE(cache.insert(0, 1, constant_series(0.5, 3)));
  EXPECT_FALSE(cache.insert(0, 1, constant_series(0.9, 3)));
  EXPECT_DOUBLE_EQ(cache.series(0, 1).probs[0], 0.5);
}

TEST(Cache, RejectsInvalidConfig) {
  const auto set = dummy_set(1);
  EkfConfig cfg;
  cfg.dt_predict = 0.0;
  EXPECT_THROW(ComparisonCache(set, cfg), ConfigError);
}

TEST(Allocate, ArgminWithLowestIdTies) {
  const auto set = dummy_set(5);
  ComparisonCache cache(set, EkfConfig{});
  fill(cache, {{0, 3, 9, 9, 9}, {2, 0, 9, 9, 9}, {4, 4, 9, 9, 9}, {5, 1, 9, 9, 9}, {1, 7, 9, 9, 9}});
  const auto c = allocate({0, 1, 2, 3, 4}, {0, 1}, cache);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.clusters[0].members, (std::vector<SampleId>{0, 2, 4}));
  EXPECT_EQ(c.clusters[1].members, (std::vector<SampleId>{1, 3}));
}

TEST(Allocate, UnreachableSampleBecomesSingleton) {
  const auto set = dummy_set(3);
  ComparisonCache cache(set, EkfConfig{});
  fill(cache, {{0, 1, 9}, {1, 0, 9}, {kInf, kInf, 0}});
  const auto c = allocate({0, 1, 2}, {0, 1}, cache);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.clusters[2].centroid, 2);
  EXPECT_EQ(c.clusters[2].members, (std::vector<SampleId>{2}));
}

TEST(Allocate, CentroidStaysInOwnCluster) {
  const auto set = dummy_set(2);
  ComparisonCache cache(set, EkfConfig{});
  fill(cache, {{5, 1}, {1, 5}});
  const auto c = allocate({0, 1}, {0, 1}, cache);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.clusters[0].members, (std::vector<SampleId>{0}));
}

TEST(Maximize, PicksLowestSum) {
  const auto set = dummy_set(3);
  ComparisonCache cache(set, EkfConfig{});
  // Column sums: a = 4 + ... arranged so that sums are {4, 2, 9}.
  fill(cache, {{0, 1, 3}, {2, 0, 3}, {2, 1, 3}});
  const Cluster cl{0, {0, 1, 2}};
  std::size_t evaluated = 0;
  EXPECT_EQ(maximize_centroid(cl, cache, ClusterConfig{}, &evaluated), 1);
  EXPECT_EQ(evaluated, 3u);
}

TEST(Maximize, LargeClusterEvaluatesCandidateFraction) {
  const std::size_t n = 150;
  ManeuverSet set;
  for (std::size_t i = 0; i < n; ++i) set.samples.push_back(testutil::straight_line(static_cast<SampleId>(i), 5, 1));
  ComparisonCache cache(set, EkfConfig{});
  std::vector<std::vector<double>> table(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) table[i][i] = 0.0;
  fill(cache, table);
  Cluster cl{7, {}};
  for (std::size_t i = 0; i < n; ++i) cl.members.push_back(static_cast<SampleId>(i));
  std::size_t evaluated = 0;
  maximize_centroid(cl, cache, ClusterConfig{}, &evaluated);
  EXPECT_LE(evaluated, 45u);
  const auto cands = detail::centroid_candidates(cl, cache, ClusterConfig{});
  EXPECT_TRUE(std::binary_search(cands.begin(), cands.end(), SampleId{7}));
}

TEST(KlDivergence, HandComputed) {
  const auto set = dummy_set(3);
  ComparisonCache cache(set, EkfConfig{});
  cache.insert(0, 1, constant_series(0.8, 4));
  cache.insert(0, 2, constant_series(0.4, 4));
  cache.insert(1, 1, constant_series(0.0, 4));
  cache.insert(1, 2, constant_series(0.3, 4));
  EXPECT_NEAR(kl_divergence_series({0, 1}, 1, 2, cache), 0.8 * std::log(2.0), 1e-12);
  EXPECT_EQ(kl_divergence_series({0, 1}, 2, 1, cache), kInf);
  EXPECT_EQ(kl_divergence_series({0, 1}, 1, 1, cache), 0.0);
}

TEST(KlDivergence, TruncatesToShortestSeries) {
  const auto set = dummy_set(3);
  ComparisonCache cache(set, EkfConfig{});
  auto a = constant_series(0.8, 4);
  a.probs[3] = 0.1;
  cache.insert(0, 1, a);
  cache.insert(0, 2, constant_series(0.4, 3));
  EXPECT_NEAR(kl_divergence_series({0}, 1, 2, cache), 0.8 * std::log(2.0), 1e-12);
}

TEST(KlDivergence, NonNegativeOnRealData) {
  const auto d = straight_data(3, 5);
  ComparisonCache cache(d.data.set, EkfConfig{});
  for (SampleId a : d.ids)
    for (SampleId b : d.ids) {
      const double kl = kl_divergence_series({a}, a, b, cache);
      // A single-member divergence can be negative only when p_to > p_from.
      if (kl < 0.0) {
        const auto& p = cache.series(a, a).probs;
        const auto& q = cache.series(a, b).probs;
        bool some_larger = false;
        for (std::size_t t = 0; t < std::min(p.size(), q.size()); ++t) some_larger |= q[t] > p[t];
        EXPECT_TRUE(some_larger);
      }
    }
}

TEST(Em, ObjectiveNonIncreasing) {
  const auto d = straight_data(5, 3);
  ComparisonCache cache(d.data.set, EkfConfig{});
  for (std::size_t k = 2; k <= 4; ++k) {
    const auto init = agglomerative(pairwise_distance(velocity_features(d.data.set)), d.ids, k);
    std::vector<double> values{objective(init, cache)};
    em_loop(init, cache, ClusterConfig{}, [&](EmStep, const Clustering& c) { values.push_back(objective(c, cache)); });
    for (std::size_t i = 1; i < values.size(); ++i)
      EXPECT_LE(values[i], values[i - 1] + 1e-9 * std::max(1.0, std::abs(values[i - 1]))) << "k " << k << " step " << i;
  }
}

TEST(Em, ConvergesToPartition) {
  const auto d = straight_data(4, 8);
  ComparisonCache cache(d.data.set, EkfConfig{});
  const auto init = clustering_from_labels(d.ids, std::vector<std::size_t>(d.ids.size(), 0));
  const auto r = em_loop(init, cache, ClusterConfig{});
  EXPECT_TRUE(r.converged);
  EXPECT_NO_THROW(r.clustering.validate(d.ids));
}

TEST(Split, MixedClusterSplitsAndHomogeneousDoesNot) {
  const auto d = straight_data(5, 4);
  ComparisonCache cache(d.data.set, EkfConfig{});
  const ClusterConfig cfg;
  std::map<std::string, std::vector<SampleId>> by_label;
  for (std::size_t i = 0; i < d.ids.size(); ++i) by_label[d.data.labels[i]].push_back(d.ids[i]);
  for (const auto& [label, members] : by_label) {
    Cluster cl{members.front(), members};
    cl.centroid = maximize_centroid(cl, cache, cfg);
    EXPECT_FALSE(try_split(cl, cache, cfg).has_value()) << label;
  }
  std::vector<SampleId> mixed = by_label["cruise"];
  mixed.insert(mixed.end(), by_label["stop"].begin(), by_label["stop"].end());
  std::sort(mixed.begin(), mixed.end());
  Cluster cl{mixed.front(), mixed};
  cl.centroid = maximize_centroid(cl, cache, cfg);
  const auto halves = try_split(cl, cache, cfg);
  ASSERT_TRUE(halves.has_value());
  EXPECT_EQ(halves->first.members.size() + halves->second.members.size(), mixed.size());
  const std::set<std::vector<SampleId>> got{halves->first.members, halves->second.members};
  const std::set<std::vector<SampleId>> want{by_label["cruise"], by_label["stop"]};
  EXPECT_EQ(got, want);
}

TEST(Split, AcceptanceMonotoneInThreshold) {
  const auto d = straight_data(4, 6);
  ComparisonCache cache(d.data.set, EkfConfig{});
  Cluster cl{d.ids.front(), d.ids};
  cl.centroid = maximize_centroid(cl, cache, ClusterConfig{});
  bool previously_accepted = true;
  for (double t : {0.0, 0.5, 1.0, 3.0, 10.0, 100.0}) {
    ClusterConfig cfg;
    cfg.t_kl = t;
    const bool accepted = evaluate_split(cl, cache, cfg).accepted;
    if (accepted) {
      EXPECT_TRUE(previously_accepted) << t;
    }
    previously_accepted = accepted;
  }
}

TEST(Split, SmallClustersNotAttempted) {
  const auto d = straight_data(1, 6);
  ComparisonCache cache(d.data.set, EkfConfig{});
  const auto decision = evaluate_split({d.ids.front(), d.ids}, cache, ClusterConfig{});
  EXPECT_FALSE(decision.attempted);
  EXPECT_FALSE(decision.accepted);
}

TEST(Merge, ClonesMergeDistinctDoNot) {
  const auto d = straight_data(6, 10);
  ComparisonCache cache(d.data.set, EkfConfig{});
  const ClusterConfig cfg;
  std::map<std::string, std::vector<SampleId>> by_label;
  for (std::size_t i = 0; i < d.ids.size(); ++i) by_label[d.data.labels[i]].push_back(d.ids[i]);
  const auto& cruise = by_label["cruise"];
  Cluster a{cruise[0], {cruise.begin(), cruise.begin() + 3}}, b{cruise[3], {cruise.begin() + 3, cruise.end()}};
  a.centroid = maximize_centroid(a, cache, cfg);
  b.centroid = maximize_centroid(b, cache, cfg);
  EXPECT_TRUE(try_merge(a, b, cache, cfg).has_value());
  Cluster s{by_label["stop"].front(), by_label["stop"]};
  s.centroid = maximize_centroid(s, cache, cfg);
  EXPECT_FALSE(try_merge(a, s, cache, cfg).has_value());
}

TEST(Pipeline, SingleArchetypeGivesOneCluster) {
  ScenarioSpec spec = testutil::straight_scenario(8);
  spec.archetypes.resize(1);
  const auto ls = synthesize(spec, 3);
  const auto ids = ls.set.ids();
  ComparisonCache cache(ls.set, EkfConfig{});
  const auto init = agglomerative(pairwise_distance(velocity_features(ls.set)), ids, 3);
  const auto r = full_pipeline(init, cache, ClusterConfig{});
  EXPECT_EQ(r.clustering.size(), 1u);
  EXPECT_EQ(r.report.termination, Termination::kConverged);
}

TEST(Pipeline, RecoversArchetypesAndNoStateRepeats) {
  const auto d = straight_data(6, 12);
  ComparisonCache cache(d.data.set, EkfConfig{});
  std::map<SampleId, std::string> truth;
  for (std::size_t i = 0; i < d.ids.size(); ++i) truth[d.ids[i]] = d.data.labels[i];
  for (std::size_t k : {2u, 5u}) {
    const auto init = pam(pairwise_distance(velocity_features(d.data.set)), d.ids, k, 1);
    const auto r = full_pipeline(init, cache, ClusterConfig{});
    EXPECT_NO_THROW(r.clustering.validate(d.ids));
    EXPECT_DOUBLE_EQ(adjusted_rand_index(r.clustering, truth), 1.0) << "k " << k;
    EXPECT_EQ(r.report.n_inf, 0u);
    EXPECT_EQ(r.report.history.size(), r.state_hashes.size());
    std::set<std::uint64_t> unique(r.state_hashes.begin(), r.state_hashes.end());
    const std::size_t expected = r.report.termination == Termination::kLoopDetected ? r.state_hashes.size() - 1
                                                                                    : r.state_hashes.size();
    EXPECT_EQ(unique.size(), expected);
  }
}

TEST(Pipeline, MaxIterationsRespected) {
  const auto d = straight_data(3, 12);
  ComparisonCache cache(d.data.set, EkfConfig{});
  ClusterConfig cfg;
  cfg.max_outer_iters = 1;
  const auto init = clustering_from_labels(d.ids, std::vector<std::size_t>(d.ids.size(), 0));
  const auto r = full_pipeline(init, cache, cfg);
  EXPECT_LE(r.state_hashes.size(), 1u);
  EXPECT_NO_THROW(r.clustering.validate(d.ids));
}

TEST(Pipeline, RejectsInvalidInit) {
  const auto d = straight_data(2, 1);
  ComparisonCache cache(d.data.set, EkfConfig{});
  Clustering bad;
  bad.clusters = {{0, {1, 2}}};
  EXPECT_THROW(full_pipeline(bad, cache, ClusterConfig{}), DataError);
}

TEST(Summary, PopulationStatistics) {
  const auto set = dummy_set(3);
  ComparisonCache cache(set, EkfConfig{});
  fill(cache, {{1, 9, 9}, {3, 9, 9}, {kInf, 9, 9}});
  Clustering c;
  c.clusters = {{0, {0, 1, 2}}};
  const auto r = summarize(c, cache);
  EXPECT_DOUBLE_EQ(r.mu_ll, 2.0);
  EXPECT_DOUBLE_EQ(r.sigma_ll, 1.0);
  EXPECT_EQ(r.n_inf, 1u);
  EXPECT_EQ(r.n_k, 1u);
}

TEST(ClusteringJson, RoundTrip) {
  Clustering c;
  c.generation = 4;
  c.clusters = {{5, {2, 5}}, {1, {0, 1, 3}}};
  c.normalize();
  ClusterReport rep;
  rep.history = {{2, 1.5, 0.5}};
  const auto j = to_json(c, &rep);
  const auto back = clustering_from_json(j);
  EXPECT_TRUE(back.same_partition(c));
  EXPECT_EQ(back.generation, 4u);
  EXPECT_EQ(j["report"]["termination"], "converged");
  EXPECT_THROW(clustering_from_json(Json{{"clusters", 3}}), DataError);
}

TEST(Clustering, ValidateAndHash) {
  Clustering c;
  c.clusters = {{0, {0, 1}}, {2, {2}}};
  EXPECT_NO_THROW(c.validate({0, 1, 2}));
  EXPECT_THROW(c.validate({0, 1, 2, 3}), DataError);
  auto d = c;
  d.clusters[0].centroid = 1;
  EXPECT_NE(c.hash(), d.hash());
  d.clusters[0].centroid = 5;
  EXPECT_THROW(d.validate({0, 1, 2}), DataError);
  EXPECT_EQ(c.centroid_of(1), 0);
  EXPECT_THROW(c.centroid_of(9), DataError);
}
