#include <gtest/gtest.h>

#include <algorithm>
#include <queue>

#include "perclaw/graph_model.hpp"

using namespace perclaw;

namespace {

// Random breadth-first tree: each site's parent is uniform among earlier
// sites, then sites are relabeled in BFS order.
Cluster random_tree(std::uint32_t n, std::uint64_t key) {
  Rng rng(key);
  std::vector<std::vector<std::uint32_t>> children(n);
  for (std::uint32_t i = 1; i < n; ++i) children[rng.below(i)].push_back(i);
  Cluster c;
  std::vector<std::uint32_t> order{0}, new_index(n);
  c.parent.push_back(kNoParent);
  c.depth.push_back(0);
  for (std::size_t h = 0; h < order.size(); ++h) {
    new_index[order[h]] = static_cast<std::uint32_t>(h);
    for (auto ch : children[order[h]]) {
      order.push_back(ch);
      c.parent.push_back(static_cast<std::uint32_t>(h));
      c.depth.push_back(c.depth[h] + 1);
    }
  }
  c.value = assign_values(c.parent, 1.0, rng);
  standardize_in_place(c.value);
  c.rank = 1;
  return c;
}

std::vector<std::uint32_t> bfs_distances(const Cluster& c, std::uint32_t src) {
  std::vector<std::vector<std::uint32_t>> adj(c.size());
  for (std::uint32_t i = 1; i < c.size(); ++i) {
    adj[i].push_back(c.parent[i]);
    adj[c.parent[i]].push_back(i);
  }
  std::vector<std::uint32_t> dist(c.size(), kNoParent);
  std::queue<std::uint32_t> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    for (auto v : adj[u])
      if (dist[v] == kNoParent) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

Dataset toy_dataset(std::uint64_t seed) {
  SimConfig cfg;
  cfg.min_size = 50;
  cfg.max_size = 20000;
  cfg.n_clusters = 10;
  return generate_dataset(cfg, seed);
}

}  // namespace

TEST(TreeDistance, MatchesBreadthFirstSearch) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    const Cluster c = random_tree(1 + static_cast<std::uint32_t>(t % 100), t);
    ASSERT_NO_THROW(c.validate());
    for (std::uint32_t u = 0; u < c.size(); ++u) {
      const auto d = bfs_distances(c, u);
      for (std::uint32_t v = 0; v < c.size(); ++v) ASSERT_EQ(tree_distance(c, u, v), d[v]);
    }
  }
}

TEST(TreeDistance, IsAMetric) {
  const Cluster c = random_tree(200, 99);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto u = static_cast<std::uint32_t>(rng.below(200));
    const auto v = static_cast<std::uint32_t>(rng.below(200));
    const auto w = static_cast<std::uint32_t>(rng.below(200));
    EXPECT_EQ(tree_distance(c, u, v), tree_distance(c, v, u));
    EXPECT_EQ(tree_distance(c, u, v) == 0, u == v);
    EXPECT_LE(tree_distance(c, u, w), tree_distance(c, u, v) + tree_distance(c, v, w));
  }
  EXPECT_EQ(tree_distance(c, 0, 150), c.depth[150]);
  EXPECT_THROW(tree_distance(c, 0, 200), std::domain_error);
}

TEST(Predict, Formula) {
  EXPECT_DOUBLE_EQ(predict(0.8, 0, 17), 0.8);
  EXPECT_DOUBLE_EQ(predict(1.0, 2, 4), 0.5);
  EXPECT_DOUBLE_EQ(naive_predict(0.7), 0.7);
  double prev = predict(1.3, 0, 100);
  for (int d = 1; d < 1000; ++d) {
    const double cur = predict(1.3, d, 100);
    EXPECT_LT(cur, prev);
    EXPECT_LE(std::abs(cur), 1.3);
    prev = cur;
  }
  EXPECT_LT(predict(1.3, 1e12, 100), 1e-10);
}

TEST(NearestTrainingSites, SweepMatchesBruteForce) {
  for (std::uint64_t t = 0; t < 30; ++t) {
    const Cluster c = random_tree(500, 1000 + t);
    LazyPermutation perm(500, t);
    const auto train = perm.take(1 + static_cast<std::uint32_t>(t * 7 % 60));
    const auto queries = perm.take(100);
    EXPECT_EQ(nearest_training_sites(c, train, queries, NnMethod::brute_force),
              nearest_training_sites(c, train, queries, NnMethod::tree_sweep));
  }
}

TEST(NearestTrainingSites, TiesBreakToSmallestIndex) {
  // star: root 0 with leaves 1..4
  Cluster c;
  c.parent = {kNoParent, 0, 0, 0, 0};
  c.depth = {0, 1, 1, 1, 1};
  c.value = {0, 0, 0, 0, 0};
  const std::vector<std::uint32_t> train{4, 2}, queries{1, 3, 0};
  for (auto m : {NnMethod::brute_force, NnMethod::tree_sweep}) {
    const auto nn = nearest_training_sites(c, train, queries, m);
    EXPECT_EQ(nn[0], (NearestNeighbor{2, 2}));
    EXPECT_EQ(nn[1], (NearestNeighbor{2, 2}));
    EXPECT_EQ(nn[2], (NearestNeighbor{2, 1}));
  }
  const auto none = nearest_training_sites(c, std::vector<std::uint32_t>{}, queries);
  EXPECT_FALSE(none[0].found());
}

TEST(SplitSpec, DisjointNestedAndValidated) {
  const Dataset ds = toy_dataset(1);
  SplitSpec split;
  split.seed = 5;
  split.train_counts.assign(ds.clusters.size(), 20);
  const auto small = draw_sites(ds, split, 0);
  split.train_counts[0] = 40;
  const auto big = draw_sites(ds, split, 0);
  EXPECT_EQ(small.test, big.test);
  EXPECT_TRUE(std::equal(small.train.begin(), small.train.end(), big.train.begin()));
  std::vector<std::uint32_t> all = big.test;
  all.insert(all.end(), big.train.begin(), big.train.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());

  split.train_counts[0] = split.max_train(ds.clusters[0].size()) + 1;
  EXPECT_THROW(split.validate(ds), std::domain_error);
  split.train_counts.pop_back();
  EXPECT_THROW(split.validate(ds), std::domain_error);
}

TEST(Evaluate, NoTrainingDataGivesPriorLoss) {
  const Dataset ds = toy_dataset(2);
  SplitSpec split;
  split.train_counts.assign(ds.clusters.size(), 0);
  const auto model = TrainedRegressor::fit(ds, split);
  const auto ev = evaluate(ds, model, split);
  EXPECT_NEAR(ev.total, 1.0, 0.15);
  for (const auto& l : ev.clusters) EXPECT_EQ(l.train_count, 0u);
}

TEST(Evaluate, MoreDataLowersLoss) {
  const Dataset ds = toy_dataset(3);
  SplitSpec split;
  split.seed = 1;
  double prev = 2.0;
  for (double frac : {0.0, 0.05, 0.2, 0.45}) {
    split.train_counts.clear();
    for (const auto& c : ds.clusters) split.train_counts.push_back(static_cast<std::uint32_t>(frac * c.size()));
    const auto ev = evaluate(ds, TrainedRegressor::fit(ds, split), split);
    EXPECT_LT(ev.total, prev);
    prev = ev.total;
  }
}

TEST(Evaluate, InvariantToTrainingOrder) {
  const Dataset ds = toy_dataset(4);
  SplitSpec split;
  split.train_counts.assign(ds.clusters.size(), 25);
  auto model = TrainedRegressor::fit(ds, split);
  const auto before = evaluate(ds, model, split);
  for (auto& t : model.train) std::reverse(t.begin(), t.end());
  const auto after = evaluate(ds, model, split);
  EXPECT_EQ(before.total, after.total);
}

TEST(Evaluate, WeightsClustersBySize) {
  std::vector<ClusterLoss> losses{{1, 300, 0, 10, 2.0}, {2, 100, 0, 10, 0.0}};
  EXPECT_DOUBLE_EQ(size_weighted_loss(losses), 1.5);
  EXPECT_THROW(size_weighted_loss(std::vector<ClusterLoss>{}), std::domain_error);
  const Cluster c = random_tree(10, 1);
  EXPECT_THROW(evaluate_cluster(c, std::vector<std::uint32_t>{1}, std::vector<std::uint32_t>{}), std::domain_error);
}

TEST(Evaluate, RejectsForeignRegressor) {
  const Dataset a = toy_dataset(5), b = toy_dataset(6);
  SplitSpec split;
  split.train_counts.assign(a.clusters.size(), 1);
  const auto model = TrainedRegressor::fit(a, split);
  EXPECT_THROW(evaluate(b, model, split), std::domain_error);
}

TEST(LossCurve, MatchesDirectEvaluationOnEveryPrefix) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    const Cluster c = random_tree(400, 500 + t);
    LazyPermutation perm(400, t);
    const auto test = perm.take(100);
    const auto order = perm.take(120);
    for (auto est : {Estimator::bayesian, Estimator::naive}) {
      const auto curve = loss_curve(c, test, order, est);
      ASSERT_EQ(curve.size(), order.size() + 1);
      for (std::uint32_t P = 0; P <= order.size(); ++P) {
        const auto direct = evaluate_cluster(c, std::span(order).first(P), test, est);
        ASSERT_NEAR(curve[P], direct.mse, 1e-12) << "tree " << t << " P " << P;
      }
    }
  }
}

TEST(LossCurve, RejectsBadInput) {
  const Cluster c = random_tree(50, 1);
  EXPECT_THROW(loss_curve(c, std::vector<std::uint32_t>{}, std::vector<std::uint32_t>{1}), std::domain_error);
  EXPECT_THROW(loss_curve(c, std::vector<std::uint32_t>{1}, std::vector<std::uint32_t>{50}), std::domain_error);
}
