// Grows one critical Bethe cluster, measures the nearest-neighbor test loss
// at nested training-set sizes and fits the broken power law to it.

#include <cstdio>
#include <vector>

#include "perclaw/experiments.hpp"

using namespace perclaw;

int main() {
  SimConfig cfg;
  cfg.min_size = 50'000;
  cfg.max_size = 2'000'000;
  cfg.n_clusters = 1;
  const Dataset ds = generate_dataset(cfg, 7);
  const Cluster& c = ds.clusters.front();
  std::printf("cluster: %zu sites, %llu growth attempts\n", c.size(), static_cast<unsigned long long>(ds.n_attempts));

  CalibrationOptions opt;
  opt.grid_max = 32768;
  const auto fit = fit_cluster_m(c, opt);
  std::printf("%8s %10s %10s\n", "P", "loss", "fit");
  for (std::size_t i = 0; i < fit.grid.size(); ++i)
    std::printf("%8.0f %10.4f %10.4f\n", fit.grid[i], fit.loss[i], broken_power_law(fit.grid[i], fit.m, opt.c_over_D));
  std::printf("m = %.2f, post-break slope %.3f\n", fit.m, fit.slope);
}
