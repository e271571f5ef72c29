#include <gtest/gtest.h>

#include <cmath>

#include "perclaw/theory.hpp"

using namespace perclaw;

namespace {

double local_slope(double (*f)(double, const TheoryParams&), const TheoryParams& p, double x0, double x1) {
  return std::log(f(x1, p) / f(x0, p)) / std::log(x1 / x0);
}

}  // namespace

TEST(Alpha, FromTau) {
  EXPECT_DOUBLE_EQ(alpha_from_tau(2.5), 1.0);
  EXPECT_DOUBLE_EQ(alpha_from_tau(3.0), 0.0);
  EXPECT_NEAR(alpha_from_tau(2.2), 4.0, 1e-12);
  EXPECT_THROW(alpha_from_tau(2.0), std::domain_error);
  EXPECT_THROW(alpha_from_tau(1.5), std::domain_error);
  EXPECT_NEAR(alpha_from_tau(tau_from_alpha(0.37)), 0.37, 1e-12);
}

TEST(TheoryParams, DefaultsAndValidation) {
  TheoryParams p;
  EXPECT_DOUBLE_EQ(p.alpha(), 1.0);
  EXPECT_DOUBLE_EQ(p.c_over_D(), 0.5);
  p.tau = 3.0;
  EXPECT_THROW(p.validate(), std::domain_error);
  p = TheoryParams{};
  p.c = 0;
  EXPECT_THROW(p.validate(), std::domain_error);
}

TEST(AllocationExponent, Substitution) {
  EXPECT_DOUBLE_EQ(allocation_exponent(1.0, 1.0), 0.0);
  EXPECT_NEAR(allocation_exponent(0.5, 1.0), -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(allocation_exponent(10.0, 1.0), 9.0 / 11.0, 1e-15);
}

TEST(SolveKbr, FrozenValues) {
  EXPECT_NEAR(solve_kbr(1e4, 0.0), 1382.7728006549808, 1e-8);
  EXPECT_NEAR(solve_kbr(100, -2.0), 5.905032887289211, 1e-10);
  EXPECT_NEAR(solve_kbr(1e6, 0.999), 999001.0139103724, 1e-4);
}

TEST(SolveKbr, DegenerateLimitMatchesLambertW) {
  for (double N : {10.0, 1e3, 1e4, 1e7}) EXPECT_NEAR(solve_kbr(N, 0.0), N / lambert_w0(N), 1e-9 * N);
}

TEST(SolveKbr, AsymptoticApproximationsWithinTenPercent) {
  EXPECT_NEAR(solve_kbr(1e6, 0.999) / 1e6, 1.0, 0.01);
  EXPECT_NEAR(solve_kbr(100, -2.0) / std::cbrt(200.0), 1.0, 0.1);
}

TEST(SolveKbr, ResidualAcrossGrid) {
  for (double N = 10; N <= 1e8; N *= 10)
    for (double b : {-3.0, -2.0, -1.0, -1.0 / 3.0, -1e-3, 0.0, 1e-7, 1e-3, 0.5, 0.9, 0.999}) {
      const double k = solve_kbr(N, b);
      EXPECT_GT(k, 1.0);
      EXPECT_LE(k, N + 1.0);
      const double r = std::abs(b) < kDegenerateB ? k * std::log(k) - N : b * N - k * (1.0 - std::pow(k, -b));
      EXPECT_LT(std::abs(r), 1e-8 * N) << "N=" << N << " b=" << b;
    }
}

TEST(SolveKbr, Errors) {
  EXPECT_THROW(solve_kbr(1.5, 0.5), NoRootError);
  EXPECT_THROW(solve_kbr(100, 2.0), NoRootError);
}

TEST(LambertW, Identity) {
  for (double x : {0.0, 1e-8, 0.5, 1.0, 2.718281828, 10.0, 1e4, 1e12}) {
    const double w = lambert_w0(x);
    EXPECT_NEAR(w * std::exp(w), x, 1e-12 * (1.0 + x));
  }
  EXPECT_THROW(lambert_w0(-0.1), std::domain_error);
}

TEST(DofAllocation, SumsToN) {
  const double k = solve_kbr(100, 0.5);
  const auto d = dof_allocation(100, 0.5, k);
  double sum = 0.0;
  for (std::size_t i = 1; i <= d.active(); ++i) sum += d.n(i);
  EXPECT_NEAR(sum, 100.0, 1e-9);
  EXPECT_EQ(d.n(d.active() + 1), 0.0);
  EXPECT_NEAR(d.a_continuous, 0.5 * 100 / (std::sqrt(k) - 1.0), 1e-12);
}

TEST(DofAllocation, FlatAtBOne) {
  const auto d = dof_allocation(50, 1.0, 51.0);
  for (std::size_t k = 1; k <= 50; ++k) EXPECT_DOUBLE_EQ(d.n(k), d.a);
  EXPECT_NEAR(d.a, 1.0, 1e-12);
}

TEST(DofAllocation, NonIncreasingForBBelowOne) {
  for (double b : {-1.5, -1.0 / 3.0, 0.0, 0.7}) {
    const auto d = dof_allocation(1000, b, solve_kbr(1000, b));
    for (std::size_t k = 2; k <= d.active() + 2; ++k) EXPECT_LE(d.n(k), d.n(k - 1));
  }
  EXPECT_THROW(dof_allocation(10, 0.5, 1.0), std::domain_error);
  EXPECT_THROW(dof_allocation(10, 0.5, 2.0).n(0), std::domain_error);
}

TEST(ModelLoss, SlopesInLimitingRegimes) {
  EXPECT_NEAR(local_slope(model_loss, TheoryParams::from_alpha(1, 10), 1e4, 1e6), -1.0, 0.02);
  EXPECT_NEAR(local_slope(model_loss, TheoryParams::from_alpha(1, 10), 1e4, 1e6), -0.99979, 1e-4);
  EXPECT_NEAR(local_slope(model_loss, TheoryParams::from_alpha(1, 0.1), 1e8 / 1.01, 1e8 * 1.01), -0.1, 0.02);
}

TEST(ModelLoss, AsymptoticBranchRatios) {
  const double N = 1e6;
  EXPECT_NEAR(model_loss(N, TheoryParams::from_alpha(1, 100)) / model_loss_large_cd(N, TheoryParams::from_alpha(1, 100)),
              1.0305, 1e-3);
  EXPECT_NEAR(model_loss(N, TheoryParams::from_alpha(1, 0.01)) / model_loss_small_cd(N, TheoryParams::from_alpha(1, 0.01)),
              1.0095, 2e-3);
}

TEST(ModelLoss, DecreasingInN) {
  for (double cd : {0.2, 0.5, 1.0, 2.0, 5.0}) {
    const auto p = TheoryParams::from_alpha(1, cd);
    double prev = model_loss(10, p);
    for (double N = 12; N <= 1e8; N *= 1.2) {
      const double cur = model_loss(N, p);
      EXPECT_LT(cur, prev) << "c/D=" << cd << " N=" << N;
      prev = cur;
    }
  }
}

TEST(DataLoss, Slopes) {
  EXPECT_NEAR(local_slope(data_loss, TheoryParams::from_alpha(1, 5), 1e6, 1e8), -0.5, 0.02);
  EXPECT_NEAR(local_slope(data_loss, TheoryParams::from_alpha(1, 0.05), 1e6, 1e8), -0.05, 0.01);
}

TEST(DataLoss, EqualExponentCase) {
  const auto p = TheoryParams::from_alpha(1, 0.5);
  const double ratio = data_loss(1e6, p) * 1e3 / (data_loss(1e3, p) * std::sqrt(1e3));
  EXPECT_NEAR(ratio, 1.7754765440493185, 1e-12);
  EXPECT_NEAR(ratio, (1 + 0.5 * std::log(1e6)) / (1 + 0.5 * std::log(1e3)), 1e-12);
}

TEST(DataLoss, GeneralFormBracketsEqualCase) {
  for (double D : {1e2, 1e4, 1e6}) {
    const double eq = data_loss(D, TheoryParams::from_alpha(1, 0.5));
    const double lo = data_loss(D, TheoryParams::from_alpha(1, 0.5 * (1 - 1e-4)));
    const double hi = data_loss(D, TheoryParams::from_alpha(1, 0.5 * (1 + 1e-4)));
    EXPECT_LE(std::min(lo, hi), eq);
    EXPECT_GE(std::max(lo, hi), eq);
    EXPECT_NEAR(lo / eq, 1.0, 0.01);
    EXPECT_NEAR(hi / eq, 1.0, 0.01);
  }
  EXPECT_NEAR(data_loss(1e2, TheoryParams::from_alpha(1, 0.5)), 0.330259, 1e-6);
  EXPECT_NEAR(data_loss(1e4, TheoryParams::from_alpha(1, 0.5)), 0.0560517, 1e-7);
}

TEST(DataLoss, DecreasingOverGrid) {
  for (double alpha : {0.5, 1.0, 2.0})
    for (double cd : {0.05, 0.2, 0.5, 1.0, 5.0}) {
      const auto p = TheoryParams::from_alpha(alpha, cd);
      double prev = data_loss(10, p);
      for (double D = 12; D <= 1e8; D *= 1.2) {
        const double cur = data_loss(D, p);
        EXPECT_LT(cur, prev) << "alpha=" << alpha << " c/D=" << cd << " D=" << D;
        prev = cur;
      }
    }
}

TEST(TaskLoss, VanishesAtBothEnds) {
  for (double p : {1e-3, 0.1, 0.5, 0.9}) {
    EXPECT_EQ(task_loss_reduction(p, 100, 0).exact, 0.0);
    EXPECT_NEAR(task_loss_reduction(p, 100, 100).exact, 0.0, 1e-14);
    for (double r : {1.0, 10.0, 50.0, 99.0}) EXPECT_LE(task_loss_reduction(p, 100, r).exact, 0.0);
  }
}

TEST(TaskLoss, LinearizationAtSmallDelta) {
  const double p = 1e-3, L = 1e4;
  const double R = 1e-4 * p * L / (1 - p);
  const auto t = task_loss_reduction(p, L, R);
  EXPECT_LT(t.delta, 1e-3);
  EXPECT_NEAR(t.linearized / t.exact, 1.0, 0.01);
  const double h = 1e-9 * L;
  const double fd = task_loss_reduction(p, L, h).exact / h;
  const double coef = (1 - p + std::log(p)) / (p * L);
  EXPECT_NEAR(fd / coef, 1.0, 1e-3);
}

TEST(TaskLoss, DomainErrors) {
  EXPECT_THROW(task_loss_reduction(0.0, 10, 1), std::domain_error);
  EXPECT_THROW(task_loss_reduction(1.0, 10, 1), std::domain_error);
  EXPECT_THROW(task_loss_reduction(0.5, 10, 11), std::domain_error);
}

TEST(PowerLawFit, RecoversExactLaw) {
  std::vector<double> x, y;
  for (double v = 1; v < 1e5; v *= 3.7) {
    x.push_back(v);
    y.push_back(2.0 * std::pow(v, 0.7));
  }
  const auto f = power_law_fit(x, y);
  EXPECT_NEAR(f.C, 2.0, 1e-10);
  EXPECT_NEAR(f.beta, 0.7, 1e-10);
  EXPECT_NEAR(f(10.0), 2.0 * std::pow(10.0, 0.7), 1e-9);
}

TEST(PowerLawFit, Errors) {
  EXPECT_THROW(power_law_fit(std::vector<double>{1, 1}, std::vector<double>{2, 2}), FitError);
  EXPECT_THROW(power_law_fit(std::vector<double>{3, 3, 3}, std::vector<double>{1, 2, 3}), FitError);
  EXPECT_THROW(power_law_fit(std::vector<double>{1, -2, 3}, std::vector<double>{1, 2, 3}), std::domain_error);
}
