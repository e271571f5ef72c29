// Optimal DOF allocation and the resulting model- and data-scaling losses
// for a few manifold exponents c/D at the mean-field alpha = 1.

#include <cstdio>

#include "perclaw/theory.hpp"

using namespace perclaw;

int main() {
  for (double cd : {0.1, 0.5, 2.0, 10.0}) {
    const auto params = TheoryParams::from_alpha(1.0, cd);
    std::printf("c/D = %.1f  (allocation exponent b = %.3f)\n", cd, allocation_exponent(cd, 1.0));
    std::printf("  %10s %10s %12s %12s\n", "N", "k_br", "model loss", "data loss");
    for (double N = 1e2; N <= 1e8; N *= 100) {
      const auto alloc = optimal_allocation(N, params);
      std::printf("  %10.0e %10.1f %12.4e %12.4e\n", N, alloc.k_br, model_loss(N, params), data_loss(N, params));
    }
  }
}
