#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace perclaw {

/// SplitMix64 finalizer. Used to expand seeds and to derive stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Top-level stream namespaces. Every consumer of randomness draws from a
/// stream keyed by (master seed, tag, ...), so adding a consumer never
/// shifts the draws seen by another.
enum class StreamTag : std::uint64_t {
  bethe_attempt = 1,
  split = 2,
  calibration = 3,
  sweep = 4,
  model_scaling = 5,
  data_scaling = 6,
  lattice_occupation = 7,
  dataset = 8,
};

/// Derives a stream key from a master seed and a path of integers.
/// Distinct paths give statistically independent streams.
constexpr std::uint64_t stream_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t k = mix64(seed ^ 0x5851f42d4c957f2dULL);
  for (std::uint64_t p : path) k = mix64(k ^ mix64(p + 0x632be59bd9b4e019ULL));
  return k;
}

constexpr std::uint64_t stream_key(std::uint64_t seed, StreamTag tag,
                                   std::initializer_list<std::uint64_t> path = {}) noexcept {
  std::uint64_t k = stream_key(seed, {static_cast<std::uint64_t>(tag)});
  for (std::uint64_t p : path) k = mix64(k ^ mix64(p + 0x632be59bd9b4e019ULL));
  return k;
}

/// xoshiro256** generator with portable, bit-stable derived draws.
/// The std:: distributions are implementation-defined, so uniform, normal and
/// bounded-integer draws are implemented here to keep outputs identical
/// across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) noexcept {
    std::uint64_t x = key;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      s = z ^ (z >> 31);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1].
  double uniform_pos() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

  /// Unbiased integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    __extension__ using u128 = unsigned __int128;
    if (bound <= 1) return 0;
    u128 m = static_cast<u128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<u128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal draw (Box-Muller, cosine branch only; two uniforms per draw).
  double normal() noexcept {
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

/// Binomial(n, p) by CDF inversion. Exact; cost is O(n p) per draw, which is
/// O(1) at the critical branching parameters this library cares about.
class BinomialSampler {
 public:
  BinomialSampler(std::uint32_t n, double p) : n_(n), p_(p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("binomial: p must lie in [0, 1]");
    if (p > 0.0 && p < 1.0) {
      q0_ = std::pow(1.0 - p, static_cast<double>(n));
      ratio_ = p / (1.0 - p);
      // Inversion from zero underflows when the mode sits far from zero.
      bernoulli_ = !(q0_ > 1e-280);
    }
  }

  std::uint32_t operator()(Rng& rng) const noexcept {
    if (p_ <= 0.0) return 0;
    if (p_ >= 1.0) return n_;
    if (bernoulli_) {
      std::uint32_t k = 0;
      for (std::uint32_t i = 0; i < n_; ++i) k += rng.uniform() < p_ ? 1u : 0u;
      return k;
    }
    const double u = rng.uniform();
    double pk = q0_;
    double cdf = pk;
    std::uint32_t k = 0;
    while (u >= cdf && k < n_) {
      pk *= ratio_ * static_cast<double>(n_ - k) / static_cast<double>(k + 1);
      ++k;
      cdf += pk;
      if (pk == 0.0 && cdf < u) break;  // tail exhausted in floating point
    }
    return k;
  }

  std::uint32_t n() const noexcept { return n_; }
  double p() const noexcept { return p_; }

 private:
  std::uint32_t n_;
  double p_;
  double q0_ = 1.0;
  double ratio_ = 0.0;
  bool bernoulli_ = false;
};

/// Multinomial counts from `draws` independent categorical draws with
/// probabilities proportional to `weights`.
inline std::vector<std::uint64_t> multinomial_counts(Rng& rng, std::span<const double> weights,
                                                     std::uint64_t draws) {
  if (weights.empty()) throw std::domain_error("multinomial: no categories");
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw std::domain_error("multinomial: negative weight");
    total += weights[i];
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw std::domain_error("multinomial: weights sum to zero");
  std::vector<std::uint64_t> counts(weights.size(), 0);
  for (std::uint64_t d = 0; d < draws; ++d) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    // Skip zero-weight categories that share a cumulative value.
    while (it != cumulative.begin() && weights[static_cast<std::size_t>(it - cumulative.begin())] == 0.0) --it;
    ++counts[static_cast<std::size_t>(it - cumulative.begin())];
  }
  return counts;
}

/// Lazily realized uniform random permutation of [0, n) (partial
/// Fisher-Yates over a sparse swap table). The first j elements do not
/// depend on how many elements are drawn later, so prefixes are nested.
class LazyPermutation {
 public:
  LazyPermutation(std::uint32_t n, std::uint64_t key) : n_(n), rng_(key) {}

  bool exhausted() const noexcept { return pos_ >= n_; }
  std::uint32_t drawn() const noexcept { return pos_; }

  std::uint32_t next() {
    if (exhausted()) throw std::out_of_range("LazyPermutation: exhausted");
    const auto j = pos_ + static_cast<std::uint32_t>(rng_.below(n_ - pos_));
    const std::uint32_t vj = at(j);
    const std::uint32_t vi = at(pos_);
    if (j != pos_) swapped_[j] = vi;
    swapped_.erase(pos_);
    ++pos_;
    return vj;
  }

  std::vector<std::uint32_t> take(std::uint32_t count) {
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(next());
    return out;
  }

 private:
  std::uint32_t at(std::uint32_t j) const {
    auto it = swapped_.find(j);
    return it == swapped_.end() ? j : it->second;
  }

  std::uint32_t n_;
  std::uint32_t pos_ = 0;
  Rng rng_;
  std::unordered_map<std::uint32_t, std::uint32_t> swapped_;
};

}  // namespace perclaw
