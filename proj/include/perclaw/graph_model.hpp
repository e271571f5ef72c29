#pragma once

// Nearest-neighbor regression on cluster trees with shortest-path distance,
// with the Gaussian-prior shrinkage estimator, and train/test evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "perclaw/bethe.hpp"
#include "perclaw/rng.hpp"

namespace perclaw {

/// Path length between sites u and v of a tree: the deeper site is lifted
/// to the other's depth, then both climb in lockstep to the common ancestor.
inline std::uint32_t tree_distance(const Cluster& c, std::uint32_t u, std::uint32_t v) {
  if (u >= c.size() || v >= c.size()) throw std::domain_error("tree_distance: site not in cluster");
  std::uint32_t hops = 0;
  while (c.depth[u] > c.depth[v]) {
    u = c.parent[u];
    ++hops;
  }
  while (c.depth[v] > c.depth[u]) {
    v = c.parent[v];
    ++hops;
  }
  while (u != v) {
    u = c.parent[u];
    v = c.parent[v];
    hops += 2;
  }
  return hops;
}

/// Posterior-mean prediction under a standard normal prior with
/// nearest-neighbor noise variance d_nn / sqrt(s).
inline double predict(double y_nn, double d_nn, double s) noexcept {
  return y_nn / (1.0 + d_nn / std::sqrt(s));
}

/// Conventional nearest-neighbor prediction.
inline double naive_predict(double y_nn) noexcept { return y_nn; }

enum class Estimator { bayesian, naive };

struct NearestNeighbor {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t site = kNone;
  std::uint32_t distance = kNone;

  bool found() const noexcept { return site != kNone; }
  bool operator==(const NearestNeighbor&) const = default;
};

enum class NnMethod { automatic, brute_force, tree_sweep };

namespace detail {

inline std::vector<NearestNeighbor> nn_brute_force(const Cluster& c, std::span<const std::uint32_t> train,
                                                   std::span<const std::uint32_t> queries) {
  std::vector<NearestNeighbor> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    NearestNeighbor best;
    for (std::uint32_t t : train) {
      const std::uint32_t d = tree_distance(c, queries[i], t);
      if (d < best.distance || (d == best.distance && t < best.site)) best = {t, d};
    }
    out[i] = best;
  }
  return out;
}

// Two passes over the breadth-first site order. Keys pack (distance, site)
// so the minimum key is the nearest site with the smallest index.
inline std::vector<NearestNeighbor> nn_tree_sweep(const Cluster& c, std::span<const std::uint32_t> train,
                                                  std::span<const std::uint32_t> queries) {
  constexpr std::uint64_t kEmpty = std::numeric_limits<std::uint64_t>::max();
  constexpr std::uint64_t kHop = std::uint64_t{1} << 32;
  thread_local std::vector<std::uint64_t> best;
  const std::size_t s = c.size();
  best.assign(s, kEmpty);
  for (std::uint32_t t : train) best[t] = t;
  for (std::size_t i = s; i-- > 1;) {
    if (best[i] == kEmpty) continue;
    auto& up = best[c.parent[i]];
    up = std::min(up, best[i] + kHop);
  }
  for (std::size_t i = 1; i < s; ++i) {
    const std::uint64_t from_parent = best[c.parent[i]];
    if (from_parent != kEmpty) best[i] = std::min(best[i], from_parent + kHop);
  }
  std::vector<NearestNeighbor> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::uint64_t key = best[queries[i]];
    if (key != kEmpty) out[i] = {static_cast<std::uint32_t>(key & 0xFFFFFFFFu), static_cast<std::uint32_t>(key >> 32)};
  }
  return out;
}

}  // namespace detail

/// Nearest training site (ties: smallest site index) for each query site.
/// Both methods are exact and agree; `automatic` picks the cheaper one.
inline std::vector<NearestNeighbor> nearest_training_sites(const Cluster& c, std::span<const std::uint32_t> train,
                                                           std::span<const std::uint32_t> queries,
                                                           NnMethod method = NnMethod::automatic) {
  for (std::uint32_t t : train)
    if (t >= c.size()) throw std::domain_error("nearest_training_sites: training site not in cluster");
  for (std::uint32_t q : queries)
    if (q >= c.size()) throw std::domain_error("nearest_training_sites: query site not in cluster");
  if (train.empty()) return std::vector<NearestNeighbor>(queries.size());
  if (method == NnMethod::automatic) {
    double depth_sum = 0.0;
    for (std::uint32_t t : train) depth_sum += c.depth[t];
    for (std::uint32_t q : queries) depth_sum += c.depth[q];
    const double mean_depth = depth_sum / static_cast<double>(train.size() + queries.size());
    const double brute = static_cast<double>(train.size()) * static_cast<double>(queries.size()) * (2.0 * mean_depth + 1.0);
    method = brute < 4.0 * static_cast<double>(c.size()) ? NnMethod::brute_force : NnMethod::tree_sweep;
  }
  return method == NnMethod::brute_force ? detail::nn_brute_force(c, train, queries)
                                         : detail::nn_tree_sweep(c, train, queries);
}

// --- splits -----------------------------------------------------------------

/// Per-cluster train counts plus the test-set rule. Each cluster's sites are
/// visited in a random order (stream keyed by seed and rank): the first
/// test_count(size) sites form the test set, the next train_count the
/// training set. Test sets therefore do not depend on train counts, and
/// training sets for increasing counts are nested.
struct SplitSpec {
  std::vector<std::uint32_t> train_counts;
  std::uint32_t test_cap = 1000;
  std::uint64_t seed = 0;

  std::uint32_t test_count(std::size_t cluster_size) const noexcept {
    return static_cast<std::uint32_t>(std::min<std::size_t>(test_cap, cluster_size / 2));
  }

  /// Largest admissible train count for a cluster of this size.
  std::uint32_t max_train(std::size_t cluster_size) const noexcept {
    return static_cast<std::uint32_t>(cluster_size - test_count(cluster_size));
  }

  void validate(const Dataset& ds) const {
    if (train_counts.size() != ds.clusters.size())
      throw std::domain_error("SplitSpec: one train count per cluster required");
    for (std::size_t k = 0; k < ds.clusters.size(); ++k)
      if (train_counts[k] > max_train(ds.clusters[k].size()))
        throw std::domain_error("SplitSpec: train and test sets would overlap in cluster rank " +
                                std::to_string(k + 1));
  }
};

struct ClusterSites {
  std::vector<std::uint32_t> test;
  std::vector<std::uint32_t> train;
};

inline std::uint64_t split_stream_key(std::uint64_t seed, std::uint32_t rank) {
  return stream_key(seed, StreamTag::split, {rank});
}

/// Draws disjoint test and training sites for one cluster.
inline ClusterSites draw_sites(std::size_t cluster_size, std::uint32_t test_count, std::uint32_t train_count,
                               std::uint64_t key) {
  if (static_cast<std::uint64_t>(test_count) + train_count > cluster_size)
    throw std::domain_error("draw_sites: train + test exceeds cluster size");
  LazyPermutation perm(static_cast<std::uint32_t>(cluster_size), key);
  ClusterSites sites;
  sites.test = perm.take(test_count);
  sites.train = perm.take(train_count);
  return sites;
}

inline ClusterSites draw_sites(const Dataset& ds, const SplitSpec& split, std::size_t k) {
  const Cluster& c = ds.clusters[k];
  return draw_sites(c.size(), split.test_count(c.size()), split.train_counts[k],
                    split_stream_key(split.seed, c.rank));
}

/// Per-cluster training sites of a fitted nearest-neighbor regressor. The
/// dataset is referenced, not copied, and must outlive the regressor.
/// Prior: mean 0, variance 1 (values are standardized).
struct TrainedRegressor {
  const Dataset* dataset = nullptr;
  std::vector<std::vector<std::uint32_t>> train;
  static constexpr double prior_mean = 0.0;
  static constexpr double prior_variance = 1.0;

  static TrainedRegressor fit(const Dataset& ds, const SplitSpec& split) {
    split.validate(ds);
    TrainedRegressor r;
    r.dataset = &ds;
    r.train.resize(ds.clusters.size());
    for (std::size_t k = 0; k < ds.clusters.size(); ++k) r.train[k] = draw_sites(ds, split, k).train;
    return r;
  }
};

struct ClusterLoss {
  std::uint32_t rank = 0;
  std::uint64_t size = 0;
  std::uint32_t train_count = 0;
  std::uint32_t test_count = 0;
  double mse = 0.0;
};

/// Mean squared error over `test` sites with the given training sites.
/// No training sites: every prediction is the prior mean 0.
inline ClusterLoss evaluate_cluster(const Cluster& c, std::span<const std::uint32_t> train,
                                    std::span<const std::uint32_t> test, Estimator estimator = Estimator::bayesian) {
  if (test.empty()) throw std::domain_error("evaluate_cluster: empty test set");
  ClusterLoss out{c.rank, c.size(), static_cast<std::uint32_t>(train.size()),
                  static_cast<std::uint32_t>(test.size()), 0.0};
  const auto nn = nearest_training_sites(c, train, test);
  const double s = static_cast<double>(c.size());
  double sse = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double y_pred = TrainedRegressor::prior_mean;
    if (nn[i].found()) {
      const double y_nn = c.value[nn[i].site];
      y_pred = estimator == Estimator::bayesian ? predict(y_nn, nn[i].distance, s) : naive_predict(y_nn);
    }
    const double err = c.value[test[i]] - y_pred;
    sse += err * err;
  }
  out.mse = sse / static_cast<double>(test.size());
  return out;
}

/// Test-set MSE along a sequence of nested training sets: entry P is the
/// MSE when the training sites are the first P entries of `train_order`
/// (P = 0 predicts the prior mean everywhere). Equal to evaluate_cluster on
/// each prefix. Each added site updates only the sites it is now nearest to,
/// found by a search that stops wherever the site does not win; on a tree
/// no site beyond such a point can be won either.
inline std::vector<double> loss_curve(const Cluster& c, std::span<const std::uint32_t> test,
                                      std::span<const std::uint32_t> train_order,
                                      Estimator estimator = Estimator::bayesian) {
  if (test.empty()) throw std::domain_error("loss_curve: empty test set");
  const std::size_t s = c.size();
  for (std::uint32_t t : train_order)
    if (t >= s) throw std::domain_error("loss_curve: training site not in cluster");
  std::vector<std::uint8_t> is_test(s, 0);
  std::unordered_map<std::uint32_t, std::uint32_t> slot;
  for (std::uint32_t i = 0; i < test.size(); ++i) {
    if (test[i] >= s) throw std::domain_error("loss_curve: test site not in cluster");
    is_test[test[i]] = 1;
    slot.emplace(test[i], i);
  }
  // Breadth-first numbering: children of h are [first[h], first[h + 1]).
  std::vector<std::uint32_t> first(s + 1, 0);
  for (std::size_t i = 1; i < s; ++i) {
    if (c.parent[i] < c.parent[i - 1] && i > 1) throw std::domain_error("loss_curve: cluster not in breadth-first order");
    ++first[c.parent[i] + 1];
  }
  first[0] = 1;
  for (std::size_t h = 0; h < s; ++h) first[h + 1] += first[h];

  constexpr std::uint64_t kEmpty = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> best(s, kEmpty);
  std::vector<long double> err2(test.size());
  long double sse = 0.0L;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const long double y = c.value[test[i]];
    err2[i] = y * y;
    sse += err2[i];
  }
  const double root_s = std::sqrt(static_cast<double>(s));
  const auto n_test = static_cast<long double>(test.size());

  std::vector<double> mse;
  mse.reserve(train_order.size() + 1);
  mse.push_back(static_cast<double>(sse / n_test));
  struct Frame {
    std::uint32_t site, from, dist;
  };
  std::vector<Frame> stack;
  for (std::uint32_t t : train_order) {
    stack.push_back({t, kNoParent, 0});
    while (!stack.empty()) {
      const Frame f = stack.back();
      stack.pop_back();
      const std::uint64_t key = (static_cast<std::uint64_t>(f.dist) << 32) | t;
      if (key >= best[f.site]) continue;
      best[f.site] = key;
      if (is_test[f.site]) {
        const std::uint32_t i = slot.at(f.site);
        const double y_nn = c.value[t];
        const double y_pred = estimator == Estimator::bayesian ? y_nn / (1.0 + f.dist / root_s) : y_nn;
        const long double e = c.value[f.site] - y_pred;
        sse += e * e - err2[i];
        err2[i] = e * e;
      }
      const std::uint32_t up = c.parent[f.site];
      if (up != kNoParent && up != f.from) stack.push_back({up, f.site, f.dist + 1});
      for (std::uint32_t ch = first[f.site]; ch < first[f.site + 1]; ++ch)
        if (ch != f.from) stack.push_back({ch, f.site, f.dist + 1});
    }
    mse.push_back(static_cast<double>(sse / n_test));
  }
  return mse;
}

struct Evaluation {
  std::vector<ClusterLoss> clusters;
  double total = 0.0;  ///< cluster MSEs weighted by cluster size
};

/// Size-weighted total of per-cluster MSEs: each cluster counts in
/// proportion to its number of sites.
inline double size_weighted_loss(std::span<const ClusterLoss> losses) {
  double num = 0.0, den = 0.0;
  for (const auto& l : losses) {
    if (l.test_count == 0) continue;
    num += static_cast<double>(l.size) * l.mse;
    den += static_cast<double>(l.size);
  }
  if (!(den > 0.0)) throw std::domain_error("size_weighted_loss: empty test set");
  return num / den;
}

inline Evaluation evaluate(const Dataset& ds, const TrainedRegressor& model, const SplitSpec& split,
                           Estimator estimator = Estimator::bayesian) {
  split.validate(ds);
  if (model.dataset != &ds || model.train.size() != ds.clusters.size())
    throw std::domain_error("evaluate: regressor was fitted on a different dataset");
  Evaluation ev;
  ev.clusters.resize(ds.clusters.size());
  for (std::size_t k = 0; k < ds.clusters.size(); ++k) {
    const Cluster& c = ds.clusters[k];
    const auto sites = draw_sites(ds, split, k);
    if (sites.test.empty()) {
      ev.clusters[k] = {c.rank, c.size(), static_cast<std::uint32_t>(model.train[k].size()), 0, 0.0};
      continue;
    }
    ev.clusters[k] = evaluate_cluster(c, model.train[k], sites.test, estimator);
  }
  ev.total = size_weighted_loss(ev.clusters);
  return ev;
}

}  // namespace perclaw
