#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "perclaw/rng.hpp"

using namespace perclaw;

namespace {

double chi2_pvalue(std::span<const std::uint64_t> observed, std::span<const double> expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double diff = static_cast<double>(observed[i]) - expected[i];
    stat += diff * diff / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST(Rng, SameKeySameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    differs |= x != c();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, StreamKeysSeparateTagsAndPaths) {
  std::set<std::uint64_t> keys;
  for (std::uint64_t seed : {0ull, 1ull})
    for (auto tag : {StreamTag::bethe_attempt, StreamTag::split, StreamTag::sweep})
      for (std::uint64_t i = 0; i < 50; ++i) keys.insert(stream_key(seed, tag, {i}));
  EXPECT_EQ(keys.size(), 2u * 3u * 50u);
  EXPECT_NE(stream_key(0, {1, 2}), stream_key(0, {2, 1}));
}

TEST(Rng, UniformRanges) {
  Rng r(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double v = r.uniform_pos();
    ASSERT_GT(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Rng, BelowIsUniform) {
  Rng r(11);
  std::vector<std::uint64_t> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.below(7)];
  std::vector<double> expected(7, n / 7.0);
  EXPECT_GT(chi2_pvalue(counts, expected), 1e-3);
}

TEST(Rng, NormalMoments) {
  Rng r(3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Binomial, DegenerateProbabilities) {
  Rng r(1);
  EXPECT_EQ(BinomialSampler(199, 0.0)(r), 0u);
  EXPECT_EQ(BinomialSampler(199, 1.0)(r), 199u);
  EXPECT_THROW(BinomialSampler(10, -0.1), std::domain_error);
  EXPECT_THROW(BinomialSampler(10, 1.5), std::domain_error);
}

TEST(Binomial, MatchesPmfAtCriticalParameters) {
  const std::uint32_t n = 199;
  const double p = 1.0 / 199.0;
  BinomialSampler bin(n, p);
  Rng r(5);
  const int draws = 200000;
  std::vector<std::uint64_t> counts(6, 0);  // 0..4, 5+
  for (int i = 0; i < draws; ++i) ++counts[std::min<std::uint32_t>(bin(r), 5)];
  std::vector<double> expected(6, 0.0);
  double tail = 1.0;
  for (std::uint32_t k = 0; k < 5; ++k) {
    const double pmf = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                                k * std::log(p) + (n - k) * std::log1p(-p));
    expected[k] = pmf * draws;
    tail -= pmf;
  }
  expected[5] = tail * draws;
  EXPECT_GT(chi2_pvalue(counts, expected), 1e-3);
}

TEST(Binomial, LargeMeanFallsBackToBernoulli) {
  BinomialSampler bin(5000, 0.5);
  Rng r(9);
  double s = 0.0;
  for (int i = 0; i < 2000; ++i) s += bin(r);
  EXPECT_NEAR(s / 2000.0, 2500.0, 5.0);
}

TEST(Multinomial, CountsSumAndSkipZeroWeights) {
  Rng r(2);
  const std::vector<double> w{3.0, 0.0, 1.0, 0.0};
  const auto c = multinomial_counts(r, w, 40000);
  EXPECT_EQ(std::accumulate(c.begin(), c.end(), std::uint64_t{0}), 40000u);
  EXPECT_EQ(c[1], 0u);
  EXPECT_EQ(c[3], 0u);
  EXPECT_NEAR(static_cast<double>(c[0]) / 40000.0, 0.75, 0.01);
}

TEST(Multinomial, RejectsBadWeights) {
  Rng r(2);
  EXPECT_THROW(multinomial_counts(r, std::vector<double>{}, 1), std::domain_error);
  EXPECT_THROW(multinomial_counts(r, std::vector<double>{0.0, 0.0}, 1), std::domain_error);
  EXPECT_THROW(multinomial_counts(r, std::vector<double>{1.0, -1.0}, 1), std::domain_error);
}

TEST(LazyPermutation, FullDrawIsPermutation) {
  LazyPermutation perm(1000, 77);
  auto xs = perm.take(1000);
  EXPECT_TRUE(perm.exhausted());
  EXPECT_THROW(perm.next(), std::out_of_range);
  std::sort(xs.begin(), xs.end());
  for (std::uint32_t i = 0; i < 1000; ++i) EXPECT_EQ(xs[i], i);
}

TEST(LazyPermutation, PrefixesAreNested) {
  LazyPermutation a(5000, 123), b(5000, 123);
  const auto short_prefix = a.take(10);
  const auto long_prefix = b.take(300);
  EXPECT_TRUE(std::equal(short_prefix.begin(), short_prefix.end(), long_prefix.begin()));
}

TEST(LazyPermutation, FirstElementUniform) {
  std::vector<std::uint64_t> counts(5, 0);
  for (std::uint64_t k = 0; k < 50000; ++k) ++counts[LazyPermutation(5, stream_key(1, {k})).next()];
  std::vector<double> expected(5, 10000.0);
  EXPECT_GT(chi2_pvalue(counts, expected), 1e-3);
}
