#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace trajclust;

namespace {

// Three well separated blobs of `per` points in the plane.
Eigen::MatrixXd blobs(std::size_t per, std::uint64_t seed) {
  Rng rng(seed);
  const double cx[] = {0.0, 10.0, 0.0}, cy[] = {0.0, 0.0, 10.0};
  Eigen::MatrixXd x(static_cast<Eigen::Index>(3 * per), 2);
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t i = 0; i < per; ++i) {
      x(static_cast<Eigen::Index>(g * per + i), 0) = cx[g] + rng.symmetric(1.0);
      x(static_cast<Eigen::Index>(g * per + i), 1) = cy[g] + rng.symmetric(1.0);
    }
  return x;
}

std::vector<std::size_t> blob_truth(std::size_t per) {
  std::vector<std::size_t> t;
  for (std::size_t g = 0; g < 3; ++g) t.insert(t.end(), per, g);
  return t;
}

Eigen::MatrixXd rings(std::size_t per) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(2 * per), 2);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < per; ++i) {
      const double a = 2 * kPi * static_cast<double>(i) / static_cast<double>(per);
      const double radius = r == 0 ? 1.0 : 4.0;
      x(static_cast<Eigen::Index>(r * per + i), 0) = radius * std::cos(a);
      x(static_cast<Eigen::Index>(r * per + i), 1) = radius * std::sin(a);
    }
  return x;
}

std::vector<SampleId> iota_ids(std::size_t n) {
  std::vector<SampleId> ids(n);
  std::iota(ids.begin(), ids.end(), SampleId{100});
  return ids;
}

using LabelFn = std::function<std::vector<std::size_t>(const Eigen::MatrixXd&, std::size_t)>;

std::vector<std::pair<std::string, LabelFn>> methods() {
  return {{"agglomerative", [](const Eigen::MatrixXd& d, std::size_t k) { return agglomerative_labels(d, k); }},
          {"pam", [](const Eigen::MatrixXd& d, std::size_t k) { return pam_labels(d, k, 3).labels; }},
          {"spectral", [](const Eigen::MatrixXd& d, std::size_t k) { return spectral_labels(d, k, 3).labels; }}};
}

}  // namespace

TEST(Distance, MatchesBruteForce) {
  const auto x = blobs(4, 1);
  const auto d = pairwise_distance(x);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      EXPECT_NEAR(d(i, j), std::sqrt(s), 1e-12);
    }
  EXPECT_TRUE(d.isApprox(d.transpose()));
}

TEST(Features, ZscoreAndResampling) {
  Eigen::MatrixXd m(3, 2);
  m << 1, 5, 2, 5, 3, 5;
  const auto z = zscore_columns(m);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(std::sqrt(z.col(0).squaredNorm() / 3.0), 1.0, 1e-12);
  EXPECT_TRUE(z.col(1).isZero());
  const auto ls = synthesize(default_scenario(2), 1);
  const auto f = velocity_features(ls.set, 20);
  EXPECT_EQ(f.rows.rows(), 6);
  EXPECT_EQ(f.rows.cols(), 20);
  EXPECT_EQ(f.ids, ls.set.ids());
}

TEST(Initializers, SingletonsWhenKEqualsN) {
  const auto d = pairwise_distance(blobs(2, 2));
  for (const auto& [name, fn] : methods()) {
    const auto labels = fn(d, 6);
    std::set<std::size_t> distinct(labels.begin(), labels.end());
    EXPECT_EQ(distinct.size(), 6u) << name;
  }
}

TEST(Initializers, RecoverPlantedGroups) {
  const std::size_t per = 8;
  const auto d = pairwise_distance(blobs(per, 5));
  for (const auto& [name, fn] : methods())
    EXPECT_DOUBLE_EQ(adjusted_rand_index(fn(d, 3), blob_truth(per)), 1.0) << name;
}

TEST(Initializers, SingleClusterWhenKIsOne) {
  const auto d = pairwise_distance(blobs(3, 6));
  for (const auto& [name, fn] : methods())
    for (auto l : fn(d, 1)) EXPECT_EQ(l, 0u) << name;
}

TEST(Initializers, RejectBadK) {
  const auto d = pairwise_distance(blobs(2, 6));
  for (const auto& [name, fn] : methods()) {
    EXPECT_THROW(fn(d, 0), std::invalid_argument) << name;
    EXPECT_THROW(fn(d, 7), std::invalid_argument) << name;
  }
}

TEST(Initializers, ClusteringsHaveMedoidCentroids) {
  const std::size_t per = 5;
  const auto d = pairwise_distance(blobs(per, 9));
  const auto ids = iota_ids(3 * per);
  for (auto m : {InitMethod::kAgglomerative, InitMethod::kPam, InitMethod::kSpectral}) {
    const auto c = initialize(m, d, ids, 3, 1);
    EXPECT_NO_THROW(c.validate(ids)) << to_string(m);
    EXPECT_EQ(c.size(), 3u);
    for (const auto& cl : c.clusters) {
      // Centroid minimizes the summed distance inside its cluster.
      const auto idx = [&](SampleId s) { return static_cast<Eigen::Index>(s - 100); };
      double own = 0.0;
      for (SampleId o : cl.members) own += d(idx(cl.centroid), idx(o));
      for (SampleId m2 : cl.members) {
        double other = 0.0;
        for (SampleId o : cl.members) other += d(idx(m2), idx(o));
        EXPECT_LE(own, other + 1e-12);
      }
    }
  }
}

TEST(Agglomerative, AverageLinkageSmallExample) {
  // Points on a line: 0, 1, 5, 6, 20.
  Eigen::MatrixXd x(5, 1);
  x << 0, 1, 5, 6, 20;
  const auto d = pairwise_distance(x);
  EXPECT_EQ(agglomerative_labels(d, 2), (std::vector<std::size_t>{0, 0, 0, 0, 1}));
  EXPECT_EQ(agglomerative_labels(d, 3), (std::vector<std::size_t>{0, 0, 1, 1, 2}));
}

TEST(Pam, CostNonIncreasing) {
  const auto d = pairwise_distance(blobs(10, 11));
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    const auto r = pam_labels(d, 4, seed);
    for (std::size_t i = 1; i < r.cost_history.size(); ++i) EXPECT_LE(r.cost_history[i], r.cost_history[i - 1]);
    EXPECT_NEAR(detail::pam_cost(d, r.medoids), r.cost_history.back(), 1e-9);
  }
}

TEST(Pam, DuplicatePointsKeepMedoidsInOwnGroup) {
  Eigen::MatrixXd x(4, 1);
  x << 0, 0, 0, 5;
  const auto d = pairwise_distance(x);
  const auto ids = iota_ids(4);
  const auto c = pam(d, ids, 3);
  EXPECT_NO_THROW(c.validate(ids));
  EXPECT_EQ(c.size(), 3u);
}

TEST(Spectral, AffinitySymmetricPsd) {
  const auto w = gaussian_affinity(pairwise_distance(blobs(5, 4)));
  EXPECT_TRUE(w.isApprox(w.transpose()));
  EXPECT_TRUE((w.diagonal().array() == 1.0).all());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(Spectral, MedianBandwidth) {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 3, 7;
  // Off-diagonal distances 1, 3, 7, 2, 6, 4: median is 3.5.
  EXPECT_DOUBLE_EQ(median_distance(pairwise_distance(x)), 3.5);
}

TEST(Spectral, SeparatesConcentricRingsWithNarrowBandwidth) {
  const std::size_t per = 24;
  const auto d = pairwise_distance(rings(per));
  std::vector<std::size_t> truth(per, 0);
  truth.insert(truth.end(), per, 1);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(spectral_labels(d, 2, 0, 0.5).labels, truth), 1.0);
}

TEST(Kmeans, DeterministicAndCorrect) {
  const auto x = blobs(6, 3);
  const auto a = kmeans_labels(x, 3, 42), b = kmeans_labels(x, 3, 42);
  EXPECT_EQ(a, b);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(a, blob_truth(6)), 1.0);
}

TEST(InitMethod, Parse) {
  EXPECT_EQ(parse_init_method("pam"), InitMethod::kPam);
  EXPECT_EQ(std::string(to_string(parse_init_method("spectral"))), "spectral");
  EXPECT_THROW(parse_init_method("kmeans"), ConfigError);
}

TEST(Sweep, SingleRowAndReproducible) {
  const auto ls = synthesize(testutil::straight_scenario(4), 2);
  ComparisonCache cache(ls.set, EkfConfig{});
  const auto one = sweep(cache, InitMethod::kAgglomerative, 3, 3, ClusterConfig{}, 0);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_TRUE(one.rows[0].best);
  const auto a = sweep(cache, InitMethod::kPam, 2, 4, ClusterConfig{}, 5);
  const auto b = sweep(cache, InitMethod::kPam, 2, 4, ClusterConfig{}, 5);
  ASSERT_EQ(a.rows.size(), 3u);
  EXPECT_EQ(sweep_csv(a.rows), sweep_csv(b.rows));
  std::size_t n_best = 0;
  for (const auto& r : a.rows) n_best += r.best;
  EXPECT_EQ(n_best, 1u);
  const auto& best = a.rows[a.best];
  for (const auto& r : a.rows) EXPECT_LE(best.mu_ll + best.sigma_ll, r.mu_ll + r.sigma_ll);
  EXPECT_THROW(sweep(cache, InitMethod::kPam, 4, 3, ClusterConfig{}, 0), ConfigError);
  EXPECT_THROW(sweep(cache, InitMethod::kPam, 2, 99, ClusterConfig{}, 0), ConfigError);
}
