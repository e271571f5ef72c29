#pragma once

// Per-cluster m calibration, DOF sweeps and scaling curves over many
// datasets. All randomness comes from streams keyed by the master seed, so
// every result is a function of (options, master seed).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perclaw/bethe.hpp"
#include "perclaw/csv.hpp"
#include "perclaw/dataset_io.hpp"
#include "perclaw/errors.hpp"
#include "perclaw/graph_model.hpp"
#include "perclaw/parallel.hpp"
#include "perclaw/rng.hpp"
#include "perclaw/stats.hpp"
#include "perclaw/svg_plot.hpp"
#include "perclaw/theory.hpp"

namespace perclaw {

// --- loss curves over a whole dataset ---------------------------------------

struct CurveOptions {
  std::uint32_t test_cap = 1000;
  Estimator estimator = Estimator::bayesian;
  unsigned threads = worker_count();
};

struct ClusterCurve {
  std::uint32_t rank = 0;
  std::uint64_t size = 0;
  std::uint32_t test_count = 0;
  std::vector<double> mse;  ///< mse[P] for P = 0 .. capacity

  std::uint32_t capacity() const noexcept { return static_cast<std::uint32_t>(mse.size() - 1); }
};

/// Test losses of every cluster as a function of its train count, for one
/// split seed. Splits follow SplitSpec: the same seed and counts give the
/// same sites as TrainedRegressor::fit.
struct CurveBank {
  std::vector<ClusterCurve> clusters;
  std::uint64_t split_seed = 0;

  /// Size-weighted total loss with points[k] training sites in cluster k.
  double total_loss(std::span<const std::uint32_t> points) const {
    if (points.size() != clusters.size()) throw std::invalid_argument("CurveBank: one count per cluster required");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      const auto& c = clusters[k];
      if (points[k] > c.capacity())
        throw std::out_of_range("CurveBank: " + std::to_string(points[k]) + " points exceed the computed curve of rank " +
                                std::to_string(c.rank));
      num += static_cast<double>(c.size) * c.mse[points[k]];
      den += static_cast<double>(c.size);
    }
    return num / den;
  }
};

/// Curves up to min(max_points[k], size - test_count) training sites.
inline CurveBank compute_curves(const Dataset& ds, std::span<const std::uint32_t> max_points, std::uint64_t split_seed,
                                const CurveOptions& options = {}) {
  if (max_points.size() != ds.clusters.size()) throw std::invalid_argument("compute_curves: one bound per cluster");
  SplitSpec split;
  split.test_cap = options.test_cap;
  split.seed = split_seed;
  CurveBank bank;
  bank.split_seed = split_seed;
  bank.clusters.resize(ds.clusters.size());
  parallel_for(
      ds.clusters.size(),
      [&](std::size_t k) {
        const Cluster& c = ds.clusters[k];
        const std::uint32_t T = split.test_count(c.size());
        const std::uint32_t P = std::min(max_points[k], split.max_train(c.size()));
        LazyPermutation perm(static_cast<std::uint32_t>(c.size()), split_stream_key(split_seed, c.rank));
        const auto test = perm.take(T);
        const auto order = perm.take(P);
        bank.clusters[k] = {c.rank, c.size(), T, loss_curve(c, test, order, options.estimator)};
      },
      options.threads);
  return bank;
}

// --- broken power law ----------------------------------------------------------

/// Loss 1 below the break m and (P/m)^-c_over_D above it.
inline double broken_power_law(double P, double m, double c_over_D) {
  return P < m ? 1.0 : std::pow(P / m, -c_over_D);
}

struct BreakFit {
  double m = 1.0;
  double residual = 0.0;  ///< mean squared log residual
};

/// Least-squares fit of the break location in log space, m in [1, max P].
/// For a fixed set of points above the break the objective is quadratic in
/// ln m, so each interval between grid points is minimized exactly.
inline BreakFit fit_break(std::span<const double> P, std::span<const double> loss, double c_over_D = 0.5) {
  if (P.size() != loss.size()) throw std::invalid_argument("fit_break: size mismatch");
  if (P.size() < 3) throw FitError("fit_break: need at least three points");
  if (!(c_over_D > 0.0)) throw std::domain_error("fit_break: c/D must be positive");
  const std::size_t n = P.size();
  std::vector<double> x(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(P[i] >= 1.0)) throw std::domain_error("fit_break: train counts must be at least 1");
    if (i > 0 && !(P[i] > P[i - 1])) throw std::domain_error("fit_break: train counts must increase");
    if (!(loss[i] > 0.0)) throw std::domain_error("fit_break: losses must be positive");
    x[i] = std::log(P[i]);
    ly[i] = std::log(loss[i]);
  }
  const auto objective = [&](double u) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = x[i] >= u ? ly[i] + c_over_D * (x[i] - u) : ly[i];
      f += r * r;
    }
    return f;
  };
  double best_u = 0.0, best_f = std::numeric_limits<double>::infinity();
  // Interval j: x[j-1] < u <= x[j], points j.. n-1 lie on the power law.
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = j == 0 ? 0.0 : std::max(0.0, x[j - 1]);
    const double hi = x[j];
    if (hi < lo) continue;
    double mean = 0.0;
    for (std::size_t i = j; i < n; ++i) mean += x[i] + ly[i] / c_over_D;
    mean /= static_cast<double>(n - j);
    const double u = std::clamp(mean, lo, hi);
    const double f = objective(u);
    if (f < best_f) {
      best_f = f;
      best_u = u;
    }
  }
  return {std::exp(best_u), best_f / static_cast<double>(n)};
}

// --- m calibration ---------------------------------------------------------------

struct CalibrationOptions {
  std::uint32_t grid_max = 16384;  ///< train-count grid: powers of two up to this
  std::uint32_t reps = 3;          ///< split seeds averaged per cluster
  std::uint64_t seed = 0;
  double c_over_D = 0.5;
  std::uint32_t test_cap = 1000;
  double failure_threshold = 0.8;  ///< a curve must drop below this to be fitted
  double warn_m = 100.0;
  Estimator estimator = Estimator::bayesian;
  unsigned threads = worker_count();

  void validate() const {
    if (grid_max < 4) throw ConfigError("grid_max", "grid_max must be at least 4");
    if (reps < 1) throw ConfigError("reps", "reps must be at least 1");
    if (!(c_over_D > 0.0)) throw ConfigError("c_over_d", "c_over_d must be positive");
    if (test_cap < 1) throw ConfigError("test_cap", "test_cap must be at least 1");
  }

  std::string fingerprint() const {
    return "grid_max=" + std::to_string(grid_max) + ";reps=" + std::to_string(reps) + ";seed=" + std::to_string(seed) +
           ";c_over_D=" + format_double(c_over_D) + ";test_cap=" + std::to_string(test_cap) +
           ";threshold=" + format_double(failure_threshold) +
           ";estimator=" + (estimator == Estimator::bayesian ? "bayesian" : "naive");
  }
};

/// Powers of two from 1 up to min(grid_max, capacity).
inline std::vector<std::uint32_t> calibration_grid(std::uint32_t capacity, std::uint32_t grid_max) {
  std::vector<std::uint32_t> g;
  for (std::uint64_t P = 1; P <= std::min(capacity, grid_max); P *= 2) g.push_back(static_cast<std::uint32_t>(P));
  return g;
}

struct ClusterCalibration {
  std::uint32_t rank = 0;
  std::uint64_t size = 0;
  double m = 1.0;
  double residual = 0.0;
  double slope = std::numeric_limits<double>::quiet_NaN();  ///< log-log slope over P > 3m
  bool fitted = false;  ///< false: curve never dropped below the threshold, m is the dataset median
  std::vector<double> grid;
  std::vector<double> loss;  ///< mean over reps at each grid point
};

/// Measures one cluster's loss on the calibration grid (averaged over reps)
/// and fits the break. Throws FitError if the curve never drops below the
/// failure threshold.
inline ClusterCalibration fit_cluster_m(const Cluster& c, const CalibrationOptions& options) {
  options.validate();
  SplitSpec split;
  split.test_cap = options.test_cap;
  const std::uint32_t T = split.test_count(c.size());
  const auto grid = calibration_grid(split.max_train(c.size()), options.grid_max);
  ClusterCalibration out;
  out.rank = c.rank;
  out.size = c.size();
  out.grid.assign(grid.begin(), grid.end());
  out.loss.assign(grid.size(), 0.0);
  if (grid.size() < 3) throw FitError("calibration: cluster rank " + std::to_string(c.rank) + " too small for the grid");
  for (std::uint32_t r = 0; r < options.reps; ++r) {
    const std::uint64_t split_seed = stream_key(options.seed, StreamTag::calibration, {r});
    LazyPermutation perm(static_cast<std::uint32_t>(c.size()), split_stream_key(split_seed, c.rank));
    const auto test = perm.take(T);
    const auto order = perm.take(grid.back());
    const auto curve = loss_curve(c, test, order, options.estimator);
    for (std::size_t i = 0; i < grid.size(); ++i) out.loss[i] += curve[grid[i]] / options.reps;
  }
  if (*std::min_element(out.loss.begin(), out.loss.end()) >= options.failure_threshold)
    throw FitError("calibration: loss of cluster rank " + std::to_string(c.rank) + " never drops below " +
                   format_double(options.failure_threshold));
  const auto fit = fit_break(out.grid, out.loss, options.c_over_D);
  out.m = fit.m;
  out.residual = fit.residual;
  out.fitted = true;
  std::vector<double> px, py;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (out.grid[i] > 3.0 * out.m) {
      px.push_back(out.grid[i]);
      py.push_back(out.loss[i]);
    }
  if (px.size() >= 3) out.slope = fit_loglog(px, py).slope;
  return out;
}

struct Calibration {
  std::vector<ClusterCalibration> clusters;
  double median_m = 1.0;  ///< over fitted clusters
  std::size_t n_failed = 0;
  std::vector<std::string> warnings;

  std::vector<double> m_values() const {
    std::vector<double> m;
    for (const auto& c : clusters) m.push_back(c.m);
    return m;
  }
};

namespace detail {

inline void finish_calibration(Calibration& cal, double warn_m) {
  std::vector<double> fitted;
  for (const auto& c : cal.clusters)
    if (c.fitted) fitted.push_back(c.m);
  if (fitted.empty()) throw FitError("calibration: no cluster could be fitted");
  cal.median_m = median(fitted);
  cal.n_failed = 0;
  cal.warnings.clear();
  for (auto& c : cal.clusters) {
    if (!c.fitted) {
      c.m = cal.median_m;
      ++cal.n_failed;
      cal.warnings.push_back("cluster rank " + std::to_string(c.rank) + ": fit failed, using median m = " +
                             format_double(cal.median_m));
    } else if (c.m > warn_m) {
      cal.warnings.push_back("cluster rank " + std::to_string(c.rank) + ": m = " + format_double(c.m) +
                             " exceeds " + format_double(warn_m));
    }
  }
}

}  // namespace detail

/// Fits m for every cluster. Clusters whose fit fails take the median m of
/// the fitted ones.
inline Calibration calibrate(const Dataset& ds, const CalibrationOptions& options) {
  options.validate();
  Calibration cal;
  cal.clusters.resize(ds.clusters.size());
  CalibrationOptions inner = options;
  inner.threads = 1;
  parallel_for(
      ds.clusters.size(),
      [&](std::size_t k) {
        try {
          cal.clusters[k] = fit_cluster_m(ds.clusters[k], inner);
        } catch (const FitError&) {
          cal.clusters[k] = ClusterCalibration{};
          cal.clusters[k].rank = ds.clusters[k].rank;
          cal.clusters[k].size = ds.clusters[k].size();
        }
      },
      options.threads);
  detail::finish_calibration(cal, options.warn_m);
  return cal;
}

inline nlohmann::ordered_json to_json(const Calibration& cal) {
  nlohmann::ordered_json j;
  j["median_m"] = cal.median_m;
  j["n_failed"] = cal.n_failed;
  auto& arr = j["clusters"] = nlohmann::ordered_json::array();
  for (const auto& c : cal.clusters) {
    nlohmann::ordered_json e;
    e["rank"] = c.rank;
    e["size"] = c.size;
    e["m"] = c.m;
    e["residual"] = c.residual;
    e["slope"] = std::isfinite(c.slope) ? nlohmann::ordered_json(c.slope) : nlohmann::ordered_json(nullptr);
    e["fitted"] = c.fitted;
    e["grid"] = c.grid;
    e["loss"] = c.loss;
    arr.push_back(std::move(e));
  }
  return j;
}

inline Calibration calibration_from_json(const nlohmann::json& j, double warn_m = 100.0) {
  Calibration cal;
  for (const auto& e : j.at("clusters")) {
    ClusterCalibration c;
    c.rank = e.at("rank").get<std::uint32_t>();
    c.size = e.at("size").get<std::uint64_t>();
    c.m = e.at("m").get<double>();
    c.residual = e.at("residual").get<double>();
    c.slope = e.at("slope").is_null() ? std::numeric_limits<double>::quiet_NaN() : e.at("slope").get<double>();
    c.fitted = e.at("fitted").get<bool>();
    c.grid = e.at("grid").get<std::vector<double>>();
    c.loss = e.at("loss").get<std::vector<double>>();
    cal.clusters.push_back(std::move(c));
  }
  detail::finish_calibration(cal, warn_m);
  return cal;
}

/// calibrate() with an on-disk cache keyed by the dataset hash and options.
/// An empty cache_dir disables caching.
inline Calibration calibrate_cached(const Dataset& ds, const CalibrationOptions& options,
                                    const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return calibrate(ds, options);
  const std::string key = sha1_hex(dataset_hash(ds) + "\n" + options.fingerprint());
  const auto path = cache_dir / ("calibration-" + key + ".json");
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.at("key").get<std::string>() == key) {
        auto cal = calibration_from_json(j, options.warn_m);
        if (cal.clusters.size() == ds.clusters.size()) return cal;
      }
    } catch (const std::exception&) {
      // unreadable cache entry: recompute and overwrite
    }
  }
  auto cal = calibrate(ds, options);
  std::filesystem::create_directories(cache_dir);
  auto j = to_json(cal);
  j["key"] = key;
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write calibration cache " + tmp);
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
  return cal;
}

// --- allocation to training points --------------------------------------------

struct Apportionment {
  std::vector<std::uint32_t> points;  ///< training sites per cluster
  double dof = 0.0;                   ///< sum of points[k] / m[k]
  std::size_t clipped = 0;            ///< clusters whose share exceeded their capacity

  bool feasible() const noexcept { return clipped == 0; }
};

/// Converts an allocation n_k to integer training points P_k near m_k n_k.
/// Shares are renormalized to N over the clusters present, floored, and the
/// remaining points go out in order of largest remainder while the DOF
/// total is short, so |sum P_k/m_k - N| < 1 before clipping to capacity.
inline Apportionment apportion(const DofAllocation& alloc, std::span<const double> m,
                               std::span<const std::uint32_t> capacity) {
  if (m.size() != capacity.size()) throw std::invalid_argument("apportion: size mismatch");
  const std::size_t K = std::min(alloc.active(), m.size());
  Apportionment out;
  out.points.assign(m.size(), 0);
  if (K == 0 || !(alloc.N > 0.0)) return out;
  double sum = 0.0;
  for (std::size_t k = 1; k <= K; ++k) sum += alloc.n(k);
  std::vector<double> remainder(K);
  double dof = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!(m[k] >= 1.0)) throw std::domain_error("apportion: m must be at least 1");
    const double target = m[k] * alloc.n(k + 1) * alloc.N / sum;
    const double fl = std::floor(target);
    out.points[k] = static_cast<std::uint32_t>(fl);
    remainder[k] = target - fl;
    dof += fl / m[k];
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k : order) {
    if (!(dof < alloc.N)) break;
    ++out.points[k];
    dof += 1.0 / m[k];
  }
  for (std::size_t k = 0; k < K; ++k)
    if (out.points[k] > capacity[k]) {
      out.points[k] = capacity[k];
      ++out.clipped;
    }
  out.dof = 0.0;
  for (std::size_t k = 0; k < K; ++k) out.dof += out.points[k] / m[k];
  return out;
}

/// Largest train count admissible in each cluster under the test-set rule.
inline std::vector<std::uint32_t> train_capacity(const Dataset& ds, std::uint32_t test_cap) {
  SplitSpec split;
  split.test_cap = test_cap;
  std::vector<std::uint32_t> cap;
  for (const auto& c : ds.clusters) cap.push_back(split.max_train(c.size()));
  return cap;
}

/// Training points per cluster for a data budget: multinomial draws with
/// probability proportional to cluster size, optionally scaled by m.
inline Apportionment sample_data_points(const Dataset& ds, std::uint64_t data_size, std::uint64_t key,
                                        std::span<const double> m, bool apply_m,
                                        std::span<const std::uint32_t> capacity) {
  Rng rng(key);
  const auto sizes = ds.sizes();
  const auto counts = multinomial_counts(rng, sizes, data_size);
  Apportionment out;
  out.points.resize(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double want = apply_m ? std::round(static_cast<double>(counts[k]) * m[k]) : static_cast<double>(counts[k]);
    if (want > capacity[k]) {
      out.points[k] = capacity[k];
      ++out.clipped;
    } else {
      out.points[k] = static_cast<std::uint32_t>(want);
    }
    out.dof += out.points[k] / m[k];
  }
  return out;
}

// --- DOF sweep ---------------------------------------------------------------------

struct SweepOptions {
  double b_min = -1.5;
  double b_max = 1.0;
  double kbr_min = 2.0;
  double kbr_max = 316.0;
  std::uint32_t n_samples = 2000;
  std::uint64_t seed = 0;       ///< cell sampling
  std::uint64_t split_seed = 0;  ///< evaluation split
  TheoryParams theory{};
  CurveOptions curves{};

  void validate() const {
    if (!(b_max > b_min)) throw ConfigError("b_max", "b_max must exceed b_min");
    if (!(kbr_min > 1.0)) throw ConfigError("kbr_min", "kbr_min must exceed 1");
    if (!(kbr_max > kbr_min)) throw ConfigError("kbr_max", "kbr_max must exceed kbr_min");
    if (n_samples < 1) throw ConfigError("n_samples", "n_samples must be at least 1");
    theory.validate();
  }
};

struct SweepCell {
  double b = 0.0;
  double k_br = 0.0;
  double loss = 0.0;
  double dof = 0.0;
  std::size_t clipped = 0;

  bool feasible() const noexcept { return clipped == 0; }
};

struct SweepResult {
  double N = 0.0;
  std::vector<SweepCell> cells;
  SweepCell theory;
  std::size_t best = 0;         ///< index of the lowest-loss cell
  std::size_t theory_rank = 0;  ///< sampled cells with strictly lower loss than the theory cell

  double theory_percentile() const noexcept {
    return static_cast<double>(theory_rank) / static_cast<double>(cells.size());
  }
};

/// Sampled (b, k_br) cells for one N; the stream depends on N, so a sweep
/// over several N equals separate single-N sweeps.
inline std::vector<SweepCell> sample_sweep_cells(double N, const SweepOptions& options) {
  Rng rng(stream_key(options.seed, StreamTag::sweep, {std::bit_cast<std::uint64_t>(N)}));
  std::vector<SweepCell> cells(options.n_samples);
  for (auto& c : cells) {
    c.b = options.b_min + (options.b_max - options.b_min) * rng.uniform();
    c.k_br = options.kbr_min + (options.kbr_max - options.kbr_min) * rng.uniform();
  }
  return cells;
}

/// Measured loss over sampled allocations n_k = a k^(b-1) for each N, plus
/// the theoretical cell. One curve bank (one split) serves every cell.
inline std::vector<SweepResult> dof_sweep(const Dataset& ds, const Calibration& cal, std::span<const double> Ns,
                                          const SweepOptions& options) {
  options.validate();
  if (cal.clusters.size() != ds.clusters.size()) throw std::invalid_argument("dof_sweep: calibration does not match dataset");
  const auto m = cal.m_values();
  const auto capacity = train_capacity(ds, options.curves.test_cap);
  const double b_star = allocation_exponent(options.theory.c_over_D(), options.theory.alpha());

  std::vector<SweepResult> results;
  std::vector<std::vector<Apportionment>> plans;
  std::vector<std::uint32_t> demand(ds.clusters.size(), 0);
  for (double N : Ns) {
    if (!(N >= 2.0)) throw ConfigError("N", "sweep N must be at least 2");
    SweepResult r;
    r.N = N;
    r.cells = sample_sweep_cells(N, options);
    r.theory.b = b_star;
    r.theory.k_br = solve_kbr(N, b_star);
    std::vector<Apportionment> plan;
    for (const auto& c : r.cells) plan.push_back(apportion(dof_allocation(N, c.b, c.k_br), m, capacity));
    plan.push_back(apportion(dof_allocation(N, r.theory.b, r.theory.k_br), m, capacity));
    for (const auto& a : plan)
      for (std::size_t k = 0; k < demand.size(); ++k) demand[k] = std::max(demand[k], a.points[k]);
    results.push_back(std::move(r));
    plans.push_back(std::move(plan));
  }
  const CurveBank bank = compute_curves(ds, demand, options.split_seed, options.curves);
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto& r = results[i];
    const auto fill = [&](SweepCell& c, const Apportionment& a) {
      c.loss = bank.total_loss(a.points);
      c.dof = a.dof;
      c.clipped = a.clipped;
    };
    for (std::size_t j = 0; j < r.cells.size(); ++j) fill(r.cells[j], plans[i][j]);
    fill(r.theory, plans[i].back());
    r.best = 0;
    r.theory_rank = 0;
    for (std::size_t j = 0; j < r.cells.size(); ++j) {
      if (r.cells[j].loss < r.cells[r.best].loss) r.best = j;
      if (r.cells[j].loss < r.theory.loss) ++r.theory_rank;
    }
  }
  return results;
}

inline SweepResult dof_sweep(const Dataset& ds, const Calibration& cal, double N, const SweepOptions& options) {
  const double Ns[] = {N};
  return dof_sweep(ds, cal, Ns, options).front();
}

// --- scaling curves -------------------------------------------------------------------

inline const char* to_string(CurveKind kind) { return kind == CurveKind::model ? "model" : "data"; }

struct ScalingOptions {
  SimConfig sim{};
  std::uint64_t master_seed = 0;
  std::uint32_t n_seeds = 50;
  std::vector<double> model_grid;  ///< N values; empty skips model scaling
  std::vector<double> data_grid;   ///< data sizes; empty skips data scaling
  TheoryParams theory{};
  CalibrationOptions calibration{};  ///< seed is replaced per dataset
  CurveOptions curves{};
  double band_lo = 16.0;
  double band_hi = 84.0;
  bool apply_m_to_data = false;
  std::filesystem::path cache_dir;  ///< calibration cache; empty disables
  std::function<void(const std::string&)> log;

  void validate() const {
    sim.validate();
    theory.validate();
    calibration.validate();
    if (n_seeds < 1) throw ConfigError("n_seeds", "n_seeds must be at least 1");
    if (model_grid.empty() && data_grid.empty()) throw ConfigError("grid", "no scaling grid given");
    for (double N : model_grid)
      if (!(N >= 2.0)) throw ConfigError("n_grid", "model-scaling N values must be at least 2");
    for (double D : data_grid)
      if (!(D >= 0.0 && D < 4.0e9 && std::floor(D) == D)) throw ConfigError("d_grid", "data sizes must be integers >= 0");
    if (!(0.0 <= band_lo && band_lo <= 50.0 && 50.0 <= band_hi && band_hi <= 100.0))
      throw ConfigError("band", "band percentiles must satisfy 0 <= lo <= 50 <= hi <= 100");
  }

  std::uint64_t dataset_seed(std::uint32_t i) const { return stream_key(master_seed, StreamTag::dataset, {i}); }
};

struct ScalingPoint {
  double scale = 0.0;
  double median = 0.0;
  double p_lo = 0.0;
  double p_hi = 0.0;
  double theory = std::numeric_limits<double>::quiet_NaN();  ///< anchored; NaN where undefined
  std::size_t n_clipped = 0;  ///< seeds where some cluster's share exceeded its capacity
};

struct ScalingCurve {
  CurveKind kind = CurveKind::model;
  std::vector<ScalingPoint> points;
  std::vector<std::vector<double>> seed_loss;  ///< [seed][grid point]
  double band_lo = 16.0;
  double band_hi = 84.0;
  double anchor_scale = 0.0;
  double anchor_factor = 1.0;  ///< measured median / raw theory at anchor_scale

  /// Fraction of grid points (with a theory value) whose anchored theory
  /// lies inside the measured [p_lo, p_hi] band.
  double agreement() const {
    std::size_t n = 0, inside = 0;
    for (const auto& p : points) {
      if (!std::isfinite(p.theory)) continue;
      ++n;
      if (p.p_lo <= p.theory && p.theory <= p.p_hi) ++inside;
    }
    return n == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(n);
  }

  /// Grid steps where the median rises.
  std::size_t monotonicity_violations() const {
    std::size_t v = 0;
    for (std::size_t i = 1; i < points.size(); ++i) v += points[i].median > points[i - 1].median ? 1 : 0;
    return v;
  }
};

struct ScalingResult {
  std::optional<ScalingCurve> model;
  std::optional<ScalingCurve> data;
  std::vector<std::uint64_t> dataset_seeds;
  std::vector<double> median_m;  ///< per dataset
};

namespace detail {

inline ScalingCurve aggregate(CurveKind kind, std::span<const double> grid,
                              const std::vector<std::vector<double>>& seed_loss,
                              const std::vector<std::vector<std::size_t>>& clipped, const ScalingOptions& o) {
  ScalingCurve curve;
  curve.kind = kind;
  curve.seed_loss = seed_loss;
  curve.band_lo = o.band_lo;
  curve.band_hi = o.band_hi;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> v;
    std::size_t nc = 0;
    for (std::size_t s = 0; s < seed_loss.size(); ++s) {
      v.push_back(seed_loss[s][g]);
      nc += clipped[s][g] > 0 ? 1 : 0;
    }
    ScalingPoint p;
    p.scale = grid[g];
    p.median = median(v);
    p.p_lo = percentile(v, o.band_lo);
    p.p_hi = percentile(v, o.band_hi);
    p.n_clipped = nc;
    curve.points.push_back(p);
  }
  // Theory holds up to a constant: anchor at the smallest scale where it is defined.
  const auto raw = [&](double x) {
    return kind == CurveKind::model || x >= 2.0 ? theory_loss(kind, x, o.theory)
                                                : std::numeric_limits<double>::quiet_NaN();
  };
  std::optional<std::size_t> anchor;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (std::isfinite(raw(grid[g])) && (!anchor || grid[g] < grid[*anchor])) anchor = g;
  if (anchor) {
    curve.anchor_scale = grid[*anchor];
    curve.anchor_factor = curve.points[*anchor].median / raw(grid[*anchor]);
    for (auto& p : curve.points) p.theory = curve.anchor_factor * raw(p.scale);
  }
  return curve;
}

}  // namespace detail

/// Model and/or data scaling over n_seeds datasets. Per dataset: generate,
/// calibrate m, turn every grid point into per-cluster train counts, compute
/// one curve bank covering all of them, and read off the losses.
inline ScalingResult run_scaling(const ScalingOptions& o) {
  o.validate();
  const auto say = [&](const std::string& s) {
    if (o.log) o.log(s);
  };
  const std::size_t nm = o.model_grid.size(), nd = o.data_grid.size();
  std::vector<std::vector<double>> model_loss_s, data_loss_s;
  std::vector<std::vector<std::size_t>> model_clip, data_clip;
  ScalingResult result;
  for (std::uint32_t i = 0; i < o.n_seeds; ++i) {
    const std::uint64_t ds_seed = o.dataset_seed(i);
    const Dataset ds = generate_dataset(o.sim, ds_seed, DatasetOptions{.threads = o.curves.threads});
    CalibrationOptions copt = o.calibration;
    copt.seed = stream_key(o.master_seed, StreamTag::calibration, {i});
    copt.threads = o.curves.threads;
    const Calibration cal = calibrate_cached(ds, copt, o.cache_dir);
    const auto m = cal.m_values();
    const auto capacity = train_capacity(ds, o.curves.test_cap);

    std::vector<Apportionment> plans;
    for (double N : o.model_grid) plans.push_back(apportion(optimal_allocation(N, o.theory), m, capacity));
    for (std::size_t j = 0; j < nd; ++j)
      plans.push_back(sample_data_points(ds, static_cast<std::uint64_t>(o.data_grid[j]),
                                         stream_key(o.master_seed, StreamTag::data_scaling, {i, j}), m,
                                         o.apply_m_to_data, capacity));
    std::vector<std::uint32_t> demand(ds.clusters.size(), 0);
    for (const auto& a : plans)
      for (std::size_t k = 0; k < demand.size(); ++k) demand[k] = std::max(demand[k], a.points[k]);
    const CurveBank bank =
        compute_curves(ds, demand, stream_key(o.master_seed, StreamTag::model_scaling, {i}), o.curves);

    std::vector<double> ml(nm), dl(nd);
    std::vector<std::size_t> mc(nm), dc(nd);
    for (std::size_t j = 0; j < nm; ++j) {
      ml[j] = bank.total_loss(plans[j].points);
      mc[j] = plans[j].clipped;
    }
    for (std::size_t j = 0; j < nd; ++j) {
      dl[j] = bank.total_loss(plans[nm + j].points);
      dc[j] = plans[nm + j].clipped;
    }
    model_loss_s.push_back(std::move(ml));
    data_loss_s.push_back(std::move(dl));
    model_clip.push_back(std::move(mc));
    data_clip.push_back(std::move(dc));
    result.dataset_seeds.push_back(ds_seed);
    result.median_m.push_back(cal.median_m);
    say("seed " + std::to_string(i + 1) + "/" + std::to_string(o.n_seeds) + ": " +
        std::to_string(ds.total_sites()) + " sites, median m " + format_double(cal.median_m) + ", " +
        std::to_string(cal.n_failed) + " unfitted");
  }
  if (nm > 0) result.model = detail::aggregate(CurveKind::model, o.model_grid, model_loss_s, model_clip, o);
  if (nd > 0) result.data = detail::aggregate(CurveKind::data, o.data_grid, data_loss_s, data_clip, o);
  return result;
}

inline ScalingCurve run_model_scaling(ScalingOptions o) {
  o.data_grid.clear();
  return *run_scaling(o).model;
}

inline ScalingCurve run_data_scaling(ScalingOptions o) {
  o.model_grid.clear();
  return *run_scaling(o).data;
}

// --- summary statistics of datasets ---------------------------------------------

/// Log-log slope of size against rank over ranks [k_min, k_max].
inline double rank_size_slope(const Dataset& ds, std::size_t k_min = 10, std::size_t k_max = 200) {
  if (k_min < 1 || k_max > ds.clusters.size() || k_max < k_min + 2)
    throw std::domain_error("rank_size_slope: rank window outside the dataset");
  std::vector<double> k, s;
  for (std::size_t r = k_min; r <= k_max; ++r) {
    k.push_back(static_cast<double>(r));
    s.push_back(static_cast<double>(ds.clusters[r - 1].size()));
  }
  return fit_loglog(k, s).slope;
}

/// Log-log slope of the empirical CCDF P(S >= s) at `points` log-spaced
/// sizes in [s_min, s_max].
inline LineFit ccdf_fit(std::vector<std::uint64_t> sizes, double s_min, double s_max, std::size_t points = 13) {
  if (sizes.empty()) throw std::domain_error("ccdf_fit: no sizes");
  std::sort(sizes.begin(), sizes.end());
  std::vector<double> x, y;
  for (double s : log_grid(s_min, s_max, points)) {
    const auto threshold = static_cast<std::uint64_t>(std::ceil(s));
    const auto it = std::lower_bound(sizes.begin(), sizes.end(), threshold);
    const auto tail = static_cast<double>(sizes.end() - it);
    if (tail == 0) continue;
    x.push_back(static_cast<double>(threshold));
    y.push_back(tail / static_cast<double>(sizes.size()));
  }
  if (x.size() < 3) throw FitError("ccdf_fit: tail too thin for the window");
  return fit_loglog(x, y);
}

// --- output ---------------------------------------------------------------------------

inline void write_curve_csv(const ScalingCurve& curve, const std::filesystem::path& path) {
  const std::string lo = "p" + format_double(curve.band_lo), hi = "p" + format_double(curve.band_hi);
  CsvWriter w(path, {"scale", "median", lo, hi, "theory", "n_clipped"});
  for (const auto& p : curve.points) w.row(p.scale, p.median, p.p_lo, p.p_hi, p.theory, p.n_clipped);
  w.close();
}

inline void write_sweep_csv(std::span<const SweepResult> results, const std::filesystem::path& path) {
  CsvWriter w(path, {"N", "b", "k_br", "loss", "dof", "feasible", "theory"});
  for (const auto& r : results) {
    for (const auto& c : r.cells) w.row(r.N, c.b, c.k_br, c.loss, c.dof, c.feasible(), false);
    w.row(r.N, r.theory.b, r.theory.k_br, r.theory.loss, r.theory.dof, r.theory.feasible(), true);
  }
  w.close();
}

inline void write_calibration_csv(const Calibration& cal, const std::filesystem::path& path) {
  CsvWriter w(path, {"rank", "size", "m", "residual", "slope", "fitted"});
  for (const auto& c : cal.clusters) w.row(c.rank, c.size, c.m, c.residual, c.slope, c.fitted);
  w.close();
}

/// Median markers, percentile band and anchored theory line.
inline std::vector<Series> scaling_series(const ScalingCurve& curve) {
  Series band{.label = "p" + format_double(curve.band_lo) + "-p" + format_double(curve.band_hi),
              .style = SeriesStyle::band};
  Series med{.label = "median", .style = SeriesStyle::markers};
  Series th{.label = "theory (anchored)", .style = SeriesStyle::line};
  band.color = "#1f77b4";
  th.color = "#d62728";
  for (const auto& p : curve.points) {
    if (!(p.scale > 0.0)) continue;
    band.x.push_back(p.scale);
    band.lo.push_back(p.p_lo);
    band.hi.push_back(p.p_hi);
    med.x.push_back(p.scale);
    med.y.push_back(p.median);
    if (std::isfinite(p.theory)) {
      th.x.push_back(p.scale);
      th.y.push_back(p.theory);
    }
  }
  std::vector<Series> out{band, med};
  if (!th.x.empty()) out.push_back(th);
  return out;
}

}  // namespace perclaw
