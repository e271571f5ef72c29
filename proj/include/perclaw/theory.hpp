#pragma once

// Closed-form scaling predictions: quanta exponent, optimal DOF allocation,
// model- and data-scaling loss, per-task loss reduction, power-law fits.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "perclaw/errors.hpp"
#include "perclaw/stats.hpp"

namespace perclaw {

/// Quanta exponent from the Fisher exponent. tau = 3 gives 0, which lies
/// outside the range the loss formulas accept.
inline double alpha_from_tau(double tau) {
  if (!(tau > 2.0)) throw std::domain_error("alpha_from_tau: tau must exceed 2");
  return (3.0 - tau) / (tau - 2.0);
}

/// Inverse of alpha_from_tau.
inline double tau_from_alpha(double alpha) {
  if (!(alpha > -1.0)) throw std::domain_error("tau_from_alpha: alpha must exceed -1");
  return (3.0 + 2.0 * alpha) / (1.0 + alpha);
}

struct TheoryParams {
  double tau = 2.5;
  double sigma_exp = 0.5;
  double D = 4.0;
  double c = 2.0;

  double alpha() const { return alpha_from_tau(tau); }
  double c_over_D() const { return c / D; }

  static TheoryParams from_alpha(double alpha, double c_over_D, double D = 4.0) {
    TheoryParams p;
    p.tau = tau_from_alpha(alpha);
    p.D = D;
    p.c = c_over_D * D;
    return p;
  }

  void validate() const {
    if (!(tau > 2.0)) throw std::domain_error("TheoryParams: tau must exceed 2");
    if (!(alpha() > 0.0)) throw std::domain_error("TheoryParams: alpha must be positive (tau < 3)");
    if (!(c > 0.0)) throw std::domain_error("TheoryParams: c must be positive");
    if (!(D > 0.0)) throw std::domain_error("TheoryParams: D must be positive");
  }
};

/// Exponent b of the optimal allocation n_k = a k^(b-1).
inline double allocation_exponent(double c_over_D, double alpha) {
  if (!(c_over_D > 0.0) || !(alpha > 0.0)) throw std::domain_error("allocation_exponent: c/D and alpha must be positive");
  return (c_over_D - alpha) / (c_over_D + 1.0);
}

inline constexpr double kDegenerateB = 1e-6;

/// k (1 - k^-b) - b N, accurate for small b.
inline double kbr_residual(double k, double N, double b) {
  if (std::abs(b) < kDegenerateB) return k * std::log(k) - N;
  return -k * std::expm1(-b * std::log(k)) - b * N;
}

/// Break rank: the root k in (1, N+1] of b N = k (1 - k^-b), or of
/// k ln k = N when |b| < 1e-6. Bisection to full double precision.
inline double solve_kbr(double N, double b) {
  if (!(N >= 2.0) || !std::isfinite(N)) throw NoRootError("solve_kbr: N must be at least 2");
  if (!std::isfinite(b)) throw NoRootError("solve_kbr: b must be finite");
  double lo = 1.0, hi = N + 1.0;
  // f(1) = -bN, or -N in the degenerate case.
  const double f_lo = std::abs(b) < kDegenerateB ? -N : -b * N;
  const double f_hi = kbr_residual(hi, N, b);
  if (f_hi == 0.0) return hi;
  if ((f_lo < 0.0) == (f_hi < 0.0))
    throw NoRootError("solve_kbr: no sign change on (1, N+1] for b = " + std::to_string(b));
  const bool increasing = f_hi > 0.0;
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f = kbr_residual(mid, N, b);
    if (f == 0.0) return mid;
    if ((f > 0.0) == increasing) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

/// Principal branch of the Lambert W function, x >= 0.
inline double lambert_w0(double x) {
  if (!(x >= 0.0)) throw std::domain_error("lambert_w0: x must be non-negative");
  if (x == 0.0) return 0.0;
  double w = x < 3.0 ? 0.5 * std::log1p(x) : std::log(x) - std::log(std::log(x));
  for (int it = 0; it < 100; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0));
    w -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(w))) break;
  }
  return w;
}

enum class KbrBranch {
  linear,       ///< c/D >> alpha: k_br ~ N
  logarithmic,  ///< c/D ~ alpha: k_br ~ N / ln(N / ln N)
  power,        ///< c/D << alpha: k_br ~ (|b| N)^(1/(1+|b|))
};

/// Asymptotic approximation of the break rank (diagnostic only).
inline double kbr_asymptotic(KbrBranch branch, double N, double b) {
  switch (branch) {
    case KbrBranch::linear: return N;
    case KbrBranch::logarithmic: return N / std::log(N / std::log(N));
    case KbrBranch::power: return std::pow(std::abs(b) * N, 1.0 / (1.0 + std::abs(b)));
  }
  throw std::logic_error("kbr_asymptotic: bad branch");
}

/// Optimal DOF allocation n_k = a k^(b-1) for ranks k < k_br.
///
/// `a_continuous` is the integral normalization b N / (k_br^b - 1) (N / ln k_br
/// at b = 0). `a` rescales it so the discrete sum over active ranks is exactly N.
struct DofAllocation {
  double N = 0.0;
  double b = 0.0;
  double k_br = 0.0;
  double a = 0.0;
  double a_continuous = 0.0;

  /// Number of ranks k >= 1 with k < k_br.
  std::size_t active() const noexcept {
    const double kc = std::ceil(k_br) - 1.0;
    return kc < 1.0 ? 0 : static_cast<std::size_t>(kc);
  }

  double n(std::size_t k) const {
    if (k == 0) throw std::domain_error("DofAllocation: ranks start at 1");
    if (static_cast<double>(k) >= k_br) return 0.0;
    return a * std::pow(static_cast<double>(k), b - 1.0);
  }

  /// n_k for k = 1..count (zero beyond the break).
  std::vector<double> values(std::size_t count) const {
    std::vector<double> out(count);
    for (std::size_t k = 1; k <= count; ++k) out[k - 1] = n(k);
    return out;
  }
};

inline DofAllocation dof_allocation(double N, double b, double k_br) {
  if (!(k_br > 1.0)) throw std::domain_error("dof_allocation: k_br must exceed 1");
  if (!(N > 0.0)) throw std::domain_error("dof_allocation: N must be positive");
  DofAllocation d{N, b, k_br, 0.0, 0.0};
  d.a_continuous = std::abs(b) < kDegenerateB ? N / std::log(k_br) : b * N / std::expm1(b * std::log(k_br));
  double sum = 0.0;
  for (std::size_t k = 1, n = d.active(); k <= n; ++k) sum += std::pow(static_cast<double>(k), b - 1.0);
  d.a = N / sum;
  return d;
}

/// Allocation at the theoretical optimum for these exponents.
inline DofAllocation optimal_allocation(double N, const TheoryParams& params) {
  params.validate();
  const double b = allocation_exponent(params.c_over_D(), params.alpha());
  return dof_allocation(N, b, solve_kbr(N, b));
}

/// Model-scaling loss (N / k_br + 1/alpha) k_br^-alpha, up to a constant.
inline double model_loss(double N, const TheoryParams& params) {
  params.validate();
  const double alpha = params.alpha();
  const double b = allocation_exponent(params.c_over_D(), alpha);
  const double k = solve_kbr(N, b);
  return (N / k + 1.0 / alpha) * std::pow(k, -alpha);
}

/// Large c/D asymptote (1 + 1/alpha) N^-alpha.
inline double model_loss_large_cd(double N, const TheoryParams& params) {
  const double alpha = params.alpha();
  return (1.0 + 1.0 / alpha) * std::pow(N, -alpha);
}

/// Small c/D asymptote (alpha/(c/D+1))^-(c/D+1) (1 + N^(-alpha/(1+alpha))/alpha) N^-c/D.
inline double model_loss_small_cd(double N, const TheoryParams& params) {
  const double alpha = params.alpha();
  const double x = params.c_over_D();
  return std::pow(alpha / (x + 1.0), -(x + 1.0)) * (1.0 + std::pow(N, -alpha / (1.0 + alpha)) / alpha) *
         std::pow(N, -x);
}

inline constexpr double kEqualExponentTol = 1e-9;

/// Data-scaling loss for dataset size `data_size`, up to a constant.
/// Switches to the equal-exponent form when |c/D - alpha/(1+alpha)| <= 1e-9.
inline double data_loss(double data_size, const TheoryParams& params) {
  params.validate();
  if (!(data_size > 0.0)) throw std::domain_error("data_loss: dataset size must be positive");
  const double alpha = params.alpha();
  const double x = params.c_over_D();
  const double e = alpha / (1.0 + alpha);
  if (std::abs(x - e) <= kEqualExponentTol)
    return std::pow(alpha, -x - 1.0) * (1.0 + x * std::log(alpha) + x * std::log(data_size)) * std::pow(data_size, -x);
  const double first = std::pow(alpha, -e - 1.0) / (1.0 - e / x) * std::pow(data_size, -e);
  const double second = std::pow(alpha, -x - 1.0) / (1.0 - x / e) * std::pow(data_size, -x);
  return first + second;
}

enum class CurveKind { model, data };

inline double theory_loss(CurveKind kind, double scale, const TheoryParams& params) {
  return kind == CurveKind::model ? model_loss(scale, params) : data_loss(scale, params);
}

struct TaskLossReduction {
  double delta = 0.0;
  double exact = 0.0;       ///< log(1+delta) + delta/(1+delta) log(p)/(1-p)
  double linearized = 0.0;  ///< (1 - p + log p)/(p L) R_s
};

/// Loss change for one masked prediction task over a vocabulary of size L
/// when the cluster concentrates mass p onto R_s of the outputs. The change is
/// non-positive on the domain and vanishes at R_s = 0 and R_s = L.
inline TaskLossReduction task_loss_reduction(double p, double L, double R_s) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("task_loss_reduction: p must lie in (0, 1)");
  if (!(L > 0.0)) throw std::domain_error("task_loss_reduction: L must be positive");
  if (!(R_s >= 0.0 && R_s <= L)) throw std::domain_error("task_loss_reduction: R_s must lie in [0, L]");
  TaskLossReduction r;
  r.delta = (1.0 - p) * R_s / (p * L);
  r.exact = std::log1p(r.delta) + r.delta / (1.0 + r.delta) * std::log(p) / (1.0 - p);
  r.linearized = (1.0 - p + std::log(p)) / (p * L) * R_s;
  return r;
}

struct PowerLawFit {
  double C = 0.0;
  double beta = 0.0;
  double stderr_beta = 0.0;
  std::size_t n = 0;

  double operator()(double x) const { return C * std::pow(x, beta); }
};

/// y = C x^beta by least squares on (log x, log y).
inline PowerLawFit power_law_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("power_law_fit: size mismatch");
  if (x.size() < 3) throw FitError("power_law_fit: need at least three points");
  const LineFit f = fit_loglog(x, y);
  return {std::exp(f.intercept), f.slope, f.slope_stderr, f.n};
}

}  // namespace perclaw
