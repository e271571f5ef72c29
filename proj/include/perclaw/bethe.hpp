#pragma once

// Critical percolation clusters on a Bethe lattice, grown as branching
// processes, with a branching-random-walk target function on each cluster.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "perclaw/errors.hpp"
#include "perclaw/parallel.hpp"
#include "perclaw/rng.hpp"

namespace perclaw {

inline constexpr std::uint32_t kNoParent = 0xFFFFFFFFu;

struct SimConfig {
  std::uint32_t d = 100;             ///< lattice dimension; coordination z = 2d
  std::optional<double> p;           ///< occupation probability; unset means p_c
  std::uint64_t min_size = 300;      ///< smallest accepted cluster (sites)
  std::uint64_t max_size = 30'000'000;  ///< growth aborts once size exceeds this
  std::uint32_t n_clusters = 316;
  double walk_std = 1.0;             ///< random-walk increment std before standardization
  std::uint64_t seed = 0;

  std::uint32_t z() const noexcept { return 2 * d; }
  double critical_p() const noexcept { return 1.0 / static_cast<double>(z() - 1); }
  double occupation() const noexcept { return p.value_or(critical_p()); }

  void validate() const {
    if (d < 1) throw ConfigError("d", "d must be at least 1 (z = 2d >= 2)");
    const double pp = occupation();
    if (!(pp >= 0.0 && pp <= 1.0)) throw ConfigError("p", "p must lie in [0, 1]");
    if (min_size < 1) throw ConfigError("min_size", "min_size must be at least 1");
    if (!(max_size > min_size)) throw ConfigError("max_size", "max_size must exceed min_size");
    if (max_size >= kNoParent) throw ConfigError("max_size", "max_size must fit 32-bit site indices");
    if (n_clusters < 1) throw ConfigError("n_clusters", "n_clusters must be at least 1");
    if (!(walk_std >= 0.0) || !std::isfinite(walk_std))
      throw ConfigError("walk_std", "walk_std must be finite and non-negative");
  }
};

/// One percolation cluster. Sites are numbered in breadth-first growth
/// order, so parent[i] < i for every non-root site and the root is site 0.
struct Cluster {
  std::vector<std::uint32_t> parent;
  std::vector<std::uint32_t> depth;
  std::vector<double> value;
  std::uint32_t rank = 0;    ///< 1 = largest in its dataset; 0 = unranked
  bool degenerate = false;   ///< values had zero variance before standardization

  std::size_t size() const noexcept { return parent.size(); }

  /// Structural check: single root at index 0, breadth-first numbering
  /// (parents precede children, parent indices non-decreasing),
  /// depth[i] = depth[parent[i]] + 1, finite values. Throws FormatError.
  void validate() const {
    const std::size_t s = size();
    if (s == 0) throw FormatError("cluster: empty");
    if (depth.size() != s || value.size() != s) throw FormatError("cluster: array length mismatch");
    if (parent[0] != kNoParent || depth[0] != 0) throw FormatError("cluster: site 0 is not a root");
    for (std::size_t i = 1; i < s; ++i) {
      if (parent[i] >= i) throw FormatError("cluster: parent does not precede child");
      if (i > 1 && parent[i] < parent[i - 1]) throw FormatError("cluster: sites not in breadth-first order");
      if (depth[i] != depth[parent[i]] + 1) throw FormatError("cluster: inconsistent depth");
    }
    for (double v : value)
      if (!std::isfinite(v)) throw FormatError("cluster: non-finite value");
  }

  bool operator==(const Cluster&) const = default;
};

struct Dataset {
  std::vector<Cluster> clusters;  ///< descending size; clusters[i].rank == i + 1
  SimConfig config;
  std::uint64_t n_rejected_small = 0;
  std::uint64_t n_rejected_large = 0;
  std::uint64_t n_attempts = 0;

  std::uint64_t seed() const noexcept { return config.seed; }

  std::uint64_t total_sites() const noexcept {
    std::uint64_t t = 0;
    for (const auto& c : clusters) t += c.size();
    return t;
  }

  std::vector<double> sizes() const {
    std::vector<double> s;
    s.reserve(clusters.size());
    for (const auto& c : clusters) s.push_back(static_cast<double>(c.size()));
    return s;
  }
};

// --- branching random walk ------------------------------------------------

inline double walk_root_value(double walk_std, Rng& rng) { return walk_std * rng.normal(); }

inline double walk_child_value(double parent_value, double walk_std, Rng& rng) {
  return parent_value + walk_std * rng.normal();
}

/// Assigns raw branching-random-walk values to a breadth-first-ordered tree:
/// root ~ N(0, walk_std^2), child ~ N(parent, walk_std^2), drawn in site order.
inline std::vector<double> assign_values(std::span<const std::uint32_t> parent, double walk_std,
                                         Rng& rng) {
  std::vector<double> v(parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (i == 0) {
      if (parent[0] != kNoParent) throw std::domain_error("assign_values: site 0 must be the root");
      v[0] = walk_root_value(walk_std, rng);
    } else {
      if (parent[i] >= i) throw std::domain_error("assign_values: tree not in breadth-first order");
      v[i] = walk_child_value(v[parent[i]], walk_std, rng);
    }
  }
  return v;
}

struct Standardized {
  std::vector<double> values;
  bool degenerate = false;
};

/// Rescales in place to zero mean and unit population standard deviation.
/// Returns true (and writes zeros) when the spread is below 1e-12.
inline bool standardize_in_place(std::span<double> v) {
  if (v.empty()) throw std::domain_error("standardize: empty input");
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd >= 1e-12)) {
    std::fill(v.begin(), v.end(), 0.0);
    return true;
  }
  for (double& x : v) x = (x - mean) / sd;
  // Second pass removes the O(eps * |mean| / sd) residual mean.
  double resid = 0.0;
  for (double x : v) resid += x;
  resid /= n;
  for (double& x : v) x -= resid;
  return false;
}

inline Standardized standardize(std::span<const double> raw) {
  Standardized out{std::vector<double>(raw.begin(), raw.end()), false};
  out.degenerate = standardize_in_place(out.values);
  return out;
}

// --- cluster growth -------------------------------------------------------

enum class Rejection { none, too_small, too_large };

inline const char* to_string(Rejection r) {
  switch (r) {
    case Rejection::none: return "accepted";
    case Rejection::too_small: return "too-small";
    case Rejection::too_large: return "too-large";
  }
  return "?";
}

/// Branching statistics of one growth attempt (non-root sites only).
struct GrowthStats {
  std::uint64_t nonroot_expanded = 0;
  std::uint64_t nonroot_children = 0;
};

struct ClusterOutcome {
  Rejection rejection = Rejection::none;
  std::uint64_t size = 0;  ///< for too-large: the size at which growth aborted
  Cluster cluster;         ///< populated only when accepted
  GrowthStats stats;

  bool accepted() const noexcept { return rejection == Rejection::none; }
};

/// Scratch storage reused across growth attempts.
struct GrowthBuffer {
  std::vector<std::uint32_t> parent;
  std::vector<std::uint32_t> depth;
  std::vector<double> value;
};

/// Grows one cluster breadth-first from a root. The root draws its child
/// count from Binomial(z, p), every later site from Binomial(z-1, p).
/// Growth stops when the frontier empties or the size exceeds max_size.
inline ClusterOutcome generate_cluster(const SimConfig& config, Rng& rng, GrowthBuffer& buf) {
  const double p = config.occupation();
  const BinomialSampler root_children(config.z(), p);
  const BinomialSampler site_children(config.z() - 1, p);
  const double walk = config.walk_std;

  buf.parent.clear();
  buf.depth.clear();
  buf.value.clear();
  buf.parent.push_back(kNoParent);
  buf.depth.push_back(0);
  buf.value.push_back(walk_root_value(walk, rng));

  ClusterOutcome out;
  for (std::size_t head = 0; head < buf.parent.size(); ++head) {
    const std::uint32_t children = head == 0 ? root_children(rng) : site_children(rng);
    if (head != 0) {
      ++out.stats.nonroot_expanded;
      out.stats.nonroot_children += children;
    }
    const std::uint32_t child_depth = buf.depth[head] + 1;
    for (std::uint32_t c = 0; c < children; ++c) {
      buf.parent.push_back(static_cast<std::uint32_t>(head));
      buf.depth.push_back(child_depth);
      buf.value.push_back(walk_child_value(buf.value[head], walk, rng));
    }
    if (buf.parent.size() > config.max_size) {
      out.rejection = Rejection::too_large;
      out.size = buf.parent.size();
      return out;
    }
  }

  out.size = buf.parent.size();
  if (out.size < config.min_size) {
    out.rejection = Rejection::too_small;
    return out;
  }
  out.cluster.parent.assign(buf.parent.begin(), buf.parent.end());
  out.cluster.depth.assign(buf.depth.begin(), buf.depth.end());
  out.cluster.value.assign(buf.value.begin(), buf.value.end());
  out.cluster.degenerate = standardize_in_place(out.cluster.value);
  return out;
}

inline ClusterOutcome generate_cluster(const SimConfig& config, Rng& rng) {
  GrowthBuffer buf;
  return generate_cluster(config, rng, buf);
}

/// Stream for growth attempt `attempt` of a dataset with master seed `seed`.
inline Rng attempt_stream(std::uint64_t seed, std::uint64_t attempt) {
  return Rng(stream_key(seed, StreamTag::bethe_attempt, {attempt}));
}

struct DatasetOptions {
  /// Abort when fewer than min_acceptance_rate * window of the last `window`
  /// attempts were accepted.
  std::uint64_t acceptance_window = 10'000'000;
  double min_acceptance_rate = 1e-6;
  unsigned threads = worker_count();
};

/// Repeats growth attempts (attempt i uses its own sub-stream) until
/// n_clusters are accepted, then ranks them by descending size with ties
/// broken by attempt order.
inline Dataset generate_dataset(const SimConfig& config, const DatasetOptions& options = {}) {
  config.validate();
  Dataset ds;
  ds.config = config;

  struct Slot {
    Rejection rejection = Rejection::none;
    Cluster cluster;
  };
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(options.threads) * 4);
  std::vector<Slot> slots(batch);
  std::deque<std::uint64_t> recent_accepts;
  std::vector<Cluster> accepted;
  accepted.reserve(config.n_clusters);

  std::uint64_t attempt = 0;
  while (accepted.size() < config.n_clusters) {
    const std::uint64_t base = attempt;
    parallel_for(
        batch,
        [&](std::size_t i) {
          thread_local GrowthBuffer buf;
          Rng rng = attempt_stream(config.seed, base + i);
          ClusterOutcome o = generate_cluster(config, rng, buf);
          slots[i].rejection = o.rejection;
          slots[i].cluster = std::move(o.cluster);
        },
        options.threads);

    for (std::size_t i = 0; i < batch && accepted.size() < config.n_clusters; ++i) {
      ++attempt;
      switch (slots[i].rejection) {
        case Rejection::none:
          accepted.push_back(std::move(slots[i].cluster));
          recent_accepts.push_back(attempt);
          break;
        case Rejection::too_small: ++ds.n_rejected_small; break;
        case Rejection::too_large: ++ds.n_rejected_large; break;
      }
      slots[i].cluster = Cluster{};
      if (attempt >= options.acceptance_window) {
        while (!recent_accepts.empty() && recent_accepts.front() + options.acceptance_window <= attempt)
          recent_accepts.pop_front();
        const double needed = options.min_acceptance_rate * static_cast<double>(options.acceptance_window);
        if (static_cast<double>(recent_accepts.size()) < needed) {
          throw std::runtime_error(
              "generate_dataset: acceptance rate fell below " + std::to_string(options.min_acceptance_rate) +
              " over the last " + std::to_string(options.acceptance_window) + " attempts (" +
              std::to_string(accepted.size()) + " of " + std::to_string(config.n_clusters) +
              " accepted; check p against min_size)");
        }
      }
    }
  }
  ds.n_attempts = attempt;

  std::stable_sort(accepted.begin(), accepted.end(),
                   [](const Cluster& a, const Cluster& b) { return a.size() > b.size(); });
  for (std::size_t i = 0; i < accepted.size(); ++i) accepted[i].rank = static_cast<std::uint32_t>(i + 1);
  ds.clusters = std::move(accepted);
  return ds;
}

inline Dataset generate_dataset(SimConfig config, std::uint64_t seed, const DatasetOptions& options = {}) {
  config.seed = seed;
  return generate_dataset(config, options);
}

/// Sizes of `n_spawns` clusters grown from independent roots with no size
/// filter. Growth still stops once a cluster exceeds config.max_size, so
/// entries above max_size are lower bounds.
inline std::vector<std::uint64_t> sample_cluster_sizes(SimConfig config, std::uint64_t n_spawns, std::uint64_t seed,
                                                       unsigned threads = worker_count()) {
  config.min_size = 1;
  config.walk_std = 0.0;
  config.validate();
  std::vector<std::uint64_t> sizes(n_spawns);
  parallel_for(
      n_spawns,
      [&](std::size_t i) {
        thread_local GrowthBuffer buf;
        Rng rng = attempt_stream(seed, i);
        sizes[i] = generate_cluster(config, rng, buf).size;
      },
      threads);
  return sizes;
}

}  // namespace perclaw
