#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "perclaw/bethe.hpp"
#include "perclaw/stats.hpp"

using namespace perclaw;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.min_size = 20;
  c.max_size = 5000;
  c.n_clusters = 12;
  return c;
}

}  // namespace

TEST(SimConfig, DefaultsAreCritical) {
  SimConfig c;
  EXPECT_EQ(c.z(), 200u);
  EXPECT_DOUBLE_EQ(c.occupation(), 1.0 / 199.0);
  EXPECT_NEAR(c.occupation(), 0.005025, 1e-6);
  EXPECT_NO_THROW(c.validate());
}

TEST(SimConfig, ValidationNamesKey) {
  auto expect_key = [](SimConfig c, const std::string& key) {
    try {
      c.validate();
      FAIL() << "expected ConfigError for " << key;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.key(), key);
    }
  };
  SimConfig c;
  c.p = 1.5;
  expect_key(c, "p");
  c = SimConfig{};
  c.max_size = c.min_size;
  expect_key(c, "max_size");
  c = SimConfig{};
  c.n_clusters = 0;
  expect_key(c, "n_clusters");
  c = SimConfig{};
  c.d = 0;
  expect_key(c, "d");
  c = SimConfig{};
  c.min_size = 0;
  expect_key(c, "min_size");
  c = SimConfig{};
  c.walk_std = -1;
  expect_key(c, "walk_std");
}

TEST(GenerateCluster, ZeroOccupationIsSingleSiteTooSmall) {
  SimConfig c;
  c.p = 0.0;
  Rng rng(1);
  const auto o = generate_cluster(c, rng);
  EXPECT_EQ(o.rejection, Rejection::too_small);
  EXPECT_EQ(o.size, 1u);
}

TEST(GenerateCluster, TooLargeAbortsAtCap) {
  SimConfig c;
  c.p = 0.5;
  c.min_size = 2;
  c.max_size = 1000;
  Rng rng(1);
  const auto o = generate_cluster(c, rng);
  EXPECT_EQ(o.rejection, Rejection::too_large);
  EXPECT_GT(o.size, 1000u);
  EXPECT_TRUE(o.cluster.parent.empty());
}

TEST(GenerateCluster, AcceptedClustersAreValidAndStandardized) {
  SimConfig c = small_config();
  int accepted = 0;
  for (std::uint64_t a = 0; a < 2000 && accepted < 20; ++a) {
    Rng rng = attempt_stream(9, a);
    const auto o = generate_cluster(c, rng);
    if (!o.accepted()) continue;
    ++accepted;
    const Cluster& cl = o.cluster;
    ASSERT_NO_THROW(cl.validate());
    EXPECT_GE(cl.size(), c.min_size);
    EXPECT_LE(cl.size(), c.max_size);
    const double s = static_cast<double>(cl.size());
    const double mean = std::accumulate(cl.value.begin(), cl.value.end(), 0.0) / s;
    double var = 0.0;
    for (double v : cl.value) var += (v - mean) * (v - mean);
    EXPECT_LT(std::abs(mean), 1e-9 * s);
    EXPECT_NEAR(std::sqrt(var / s), 1.0, 1e-9);
  }
  EXPECT_EQ(accepted, 20);
}

TEST(GenerateCluster, MeanChildCountIsOneAtCriticality) {
  SimConfig c;
  c.min_size = 1;
  c.max_size = 1'000'000;
  GrowthStats total;
  GrowthBuffer buf;
  for (std::uint64_t a = 0; total.nonroot_expanded < 300'000; ++a) {
    Rng rng = attempt_stream(4, a);
    const auto o = generate_cluster(c, rng, buf);
    total.nonroot_expanded += o.stats.nonroot_expanded;
    total.nonroot_children += o.stats.nonroot_children;
  }
  const double mean = static_cast<double>(total.nonroot_children) / static_cast<double>(total.nonroot_expanded);
  EXPECT_NEAR(mean, 1.0, 0.01);
}

TEST(AssignValues, ZeroWalkGivesConstantValues) {
  const std::vector<std::uint32_t> parent{kNoParent, 0, 0, 1, 1, 2};
  Rng rng(5);
  const auto v = assign_values(parent, 0.0, rng);
  for (double x : v) EXPECT_EQ(x, v[0]);
}

TEST(AssignValues, RejectsNonBreadthFirstTrees) {
  Rng rng(5);
  EXPECT_THROW(assign_values(std::vector<std::uint32_t>{kNoParent, 2, 0}, 1.0, rng), std::domain_error);
  EXPECT_THROW(assign_values(std::vector<std::uint32_t>{0, 0}, 1.0, rng), std::domain_error);
}

TEST(AssignValues, VarianceGrowsLinearlyWithDepth) {
  // A path of 21 sites: value[h] - value[0] is a sum of h increments.
  std::vector<std::uint32_t> parent(21);
  parent[0] = kNoParent;
  for (std::uint32_t i = 1; i < 21; ++i) parent[i] = i - 1;
  std::vector<double> sum2(21, 0.0);
  const int paths = 20000;
  const double walk = 1.5;
  for (int t = 0; t < paths; ++t) {
    Rng rng(stream_key(17, {static_cast<std::uint64_t>(t)}));
    const auto v = assign_values(parent, walk, rng);
    for (int h = 1; h <= 20; ++h) sum2[h] += (v[h] - v[0]) * (v[h] - v[0]);
  }
  std::vector<double> hs, vars;
  for (int h = 1; h <= 20; ++h) {
    hs.push_back(h);
    vars.push_back(sum2[h] / paths);
  }
  const auto f = fit_line(hs, vars);
  EXPECT_NEAR(f.slope, walk * walk, 0.05 * walk * walk);
}

TEST(Standardize, ThreeValues) {
  const auto r = standardize(std::vector<double>{1, 2, 3});
  EXPECT_FALSE(r.degenerate);
  EXPECT_NEAR(r.values[0], -std::sqrt(1.5), 1e-12);
  EXPECT_NEAR(r.values[1], 0.0, 1e-12);
  EXPECT_NEAR(r.values[2], std::sqrt(1.5), 1e-12);
}

TEST(Standardize, ConstantInputIsDegenerate) {
  const auto r = standardize(std::vector<double>{5, 5, 5});
  EXPECT_TRUE(r.degenerate);
  for (double v : r.values) EXPECT_EQ(v, 0.0);
}

TEST(Standardize, TwoValuesAreExactlyPlusMinusOne) {
  const auto r = standardize(std::vector<double>{-3.0, 10.0});
  EXPECT_DOUBLE_EQ(r.values[0], -1.0);
  EXPECT_DOUBLE_EQ(r.values[1], 1.0);
}

TEST(GenerateDataset, SortedRankedAndDeterministic) {
  const SimConfig c = small_config();
  const Dataset a = generate_dataset(c, 3);
  ASSERT_EQ(a.clusters.size(), c.n_clusters);
  for (std::size_t i = 0; i < a.clusters.size(); ++i) {
    EXPECT_EQ(a.clusters[i].rank, i + 1);
    if (i > 0) {
      EXPECT_GE(a.clusters[i - 1].size(), a.clusters[i].size());
    }
  }
  EXPECT_EQ(a.n_attempts, a.n_rejected_small + a.n_rejected_large + c.n_clusters);
  const Dataset b = generate_dataset(c, 3);
  EXPECT_EQ(a.clusters, b.clusters);
  const Dataset other = generate_dataset(c, 4);
  EXPECT_NE(a.clusters, other.clusters);
}

TEST(GenerateDataset, IndependentOfThreadCount) {
  const SimConfig c = small_config();
  DatasetOptions one;
  one.threads = 1;
  DatasetOptions four;
  four.threads = 4;
  EXPECT_EQ(generate_dataset(c, 8, one).clusters, generate_dataset(c, 8, four).clusters);
}

TEST(GenerateDataset, AbortsOnPathologicalAcceptance) {
  SimConfig c = small_config();
  c.p = 0.0;
  DatasetOptions opt;
  opt.acceptance_window = 1000;
  opt.min_acceptance_rate = 0.01;
  EXPECT_THROW(generate_dataset(c, opt), std::runtime_error);
}
