#pragma once

// Site percolation on 2-D and 3-D hypercubic lattices with open boundaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "perclaw/errors.hpp"
#include "perclaw/rng.hpp"
#include "perclaw/stats.hpp"

namespace perclaw {

inline constexpr std::uint64_t kMaxLatticeSites = 100'000'000;
inline constexpr std::uint32_t kEmptySite = 0xFFFFFFFFu;

struct LatticeConfig {
  unsigned dims = 3;
  std::uint32_t L = 10;
  double p = 0.3116;
  std::uint64_t seed = 0;

  std::uint64_t volume() const {
    std::uint64_t v = 1;
    for (unsigned i = 0; i < dims; ++i) {
      v *= L;
      if (v > kMaxLatticeSites) throw std::length_error("lattice: L^dims exceeds " + std::to_string(kMaxLatticeSites) + " sites");
    }
    return v;
  }

  void validate() const {
    if (dims != 2 && dims != 3) throw ConfigError("dims", "dims must be 2 or 3");
    if (L < 2) throw ConfigError("L", "L must be at least 2");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p", "p must lie in [0, 1]");
    (void)volume();
  }
};

/// Disjoint sets over lattice sites; negative entries are roots holding
/// minus the set size.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n, -1) {}

  std::uint32_t find(std::uint32_t x) {
    std::uint32_t root = x;
    while (parent_[root] >= 0) root = static_cast<std::uint32_t>(parent_[root]);
    while (parent_[x] >= 0) {
      const auto next = static_cast<std::uint32_t>(parent_[x]);
      parent_[x] = static_cast<std::int32_t>(root);
      x = next;
    }
    return root;
  }

  /// Returns the surviving root.
  std::uint32_t unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (parent_[a] > parent_[b]) std::swap(a, b);  // a is the larger set
    parent_[a] += parent_[b];
    parent_[b] = static_cast<std::int32_t>(a);
    return a;
  }

  std::uint64_t set_size(std::uint32_t x) { return static_cast<std::uint64_t>(-parent_[find(x)]); }

 private:
  std::vector<std::int32_t> parent_;
};

/// Site index x + L (y + L z) and back.
struct LatticeGeometry {
  unsigned dims;
  std::uint32_t L;

  std::uint32_t coord(std::uint32_t site, unsigned axis) const {
    for (unsigned a = 0; a < axis; ++a) site /= L;
    return site % L;
  }
  std::uint32_t stride(unsigned axis) const {
    std::uint32_t s = 1;
    for (unsigned a = 0; a < axis; ++a) s *= L;
    return s;
  }
  /// Bit 2a: touches the low face of axis a; bit 2a+1: the high face.
  std::uint8_t face_mask(std::uint32_t site) const {
    std::uint8_t m = 0;
    for (unsigned a = 0; a < dims; ++a) {
      const auto c = site % L;
      site /= L;
      if (c == 0) m |= static_cast<std::uint8_t>(1u << (2 * a));
      if (c == L - 1) m |= static_cast<std::uint8_t>(1u << (2 * a + 1));
    }
    return m;
  }
  static bool spans(std::uint8_t mask, unsigned dims) {
    for (unsigned a = 0; a < dims; ++a)
      if (((mask >> (2 * a)) & 3u) == 3u) return true;
    return false;
  }
};

/// Per-site uniforms of one trial. Site i is occupied at p iff u[i] < p, so
/// occupations for different p share the same random numbers.
inline std::vector<double> site_uniforms(std::uint64_t volume, std::uint64_t seed, std::uint64_t trial) {
  Rng rng(stream_key(seed, StreamTag::lattice_occupation, {trial}));
  std::vector<double> u(volume);
  for (auto& x : u) x = rng.uniform();
  return u;
}

inline std::vector<std::uint8_t> occupy(const LatticeConfig& config, std::uint64_t trial = 0) {
  config.validate();
  Rng rng(stream_key(config.seed, StreamTag::lattice_occupation, {trial}));
  std::vector<std::uint8_t> occ(config.volume());
  for (auto& o : occ) o = rng.uniform() < config.p ? 1 : 0;
  return occ;
}

/// Nearest-neighbor clusters of occupied sites. Each occupied site gets the
/// smallest site index of its cluster; empty sites get kEmptySite.
inline std::vector<std::uint32_t> label_clusters(std::span<const std::uint8_t> occupied, unsigned dims, std::uint32_t L) {
  const LatticeGeometry geo{dims, L};
  const std::size_t n = occupied.size();
  UnionFind uf(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!occupied[i]) continue;
    for (unsigned a = 0; a < dims; ++a) {
      const std::uint32_t s = geo.stride(a);
      if (geo.coord(i, a) + 1 < L && occupied[i + s]) uf.unite(i, i + s);
    }
  }
  std::vector<std::uint32_t> canon(n, kEmptySite), labels(n, kEmptySite);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!occupied[i]) continue;
    const auto r = uf.find(i);
    if (canon[r] == kEmptySite) canon[r] = i;
    labels[i] = canon[r];
  }
  return labels;
}

struct ClusterStats {
  std::uint64_t volume = 0;
  std::uint64_t occupied = 0;
  std::map<std::uint64_t, std::uint64_t> counts;  ///< cluster size -> number of clusters
  std::uint64_t largest_size = 0;
  std::uint32_t largest_label = kEmptySite;
  bool spans = false;        ///< largest cluster touches opposite faces of some axis
  bool any_spans = false;    ///< some cluster does

  /// Clusters of size s per lattice site.
  double n_s(std::uint64_t s) const {
    auto it = counts.find(s);
    return it == counts.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(volume);
  }
};

inline ClusterStats cluster_stats(std::span<const std::uint32_t> labels, unsigned dims, std::uint32_t L) {
  const LatticeGeometry geo{dims, L};
  ClusterStats st;
  st.volume = labels.size();
  std::vector<std::uint64_t> size(labels.size(), 0);
  std::vector<std::uint8_t> mask(labels.size(), 0);
  for (std::uint32_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kEmptySite) continue;
    ++st.occupied;
    ++size[labels[i]];
    mask[labels[i]] |= geo.face_mask(i);
  }
  for (std::uint32_t i = 0; i < labels.size(); ++i) {
    if (size[i] == 0) continue;
    ++st.counts[size[i]];
    const bool spans = LatticeGeometry::spans(mask[i], dims);
    st.any_spans |= spans;
    if (size[i] > st.largest_size) {
      st.largest_size = size[i];
      st.largest_label = i;
      st.spans = spans;
    }
  }
  return st;
}

struct LabeledLattice {
  LatticeConfig config;
  std::vector<std::uint8_t> occupied;
  std::vector<std::uint32_t> labels;
  ClusterStats stats;
};

inline LabeledLattice occupy_and_label(const LatticeConfig& config, std::uint64_t trial = 0) {
  LabeledLattice out;
  out.config = config;
  out.occupied = occupy(config, trial);
  out.labels = label_clusters(out.occupied, config.dims, config.L);
  out.stats = cluster_stats(out.labels, config.dims, config.L);
  return out;
}

/// Occupation threshold of one trial: the lattice spans at p iff p > the
/// returned value (sites are added in order of their uniforms). Returns 1
/// when even the full lattice does not span, which cannot happen for L >= 2.
inline double spanning_threshold(unsigned dims, std::uint32_t L, std::uint64_t seed, std::uint64_t trial) {
  LatticeConfig cfg{dims, L, 0.5, seed};
  cfg.validate();
  const LatticeGeometry geo{dims, L};
  const auto u = site_uniforms(cfg.volume(), seed, trial);
  std::vector<std::uint32_t> order(u.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return u[a] < u[b]; });
  UnionFind uf(u.size());
  std::vector<std::uint8_t> present(u.size(), 0), mask(u.size(), 0);
  for (std::uint32_t i : order) {
    present[i] = 1;
    std::uint8_t m = geo.face_mask(i);
    std::uint32_t root = i;
    for (unsigned a = 0; a < dims; ++a) {
      const std::uint32_t s = geo.stride(a);
      const std::uint32_t c = geo.coord(i, a);
      for (const bool up : {false, true}) {
        if (up ? c + 1 >= L : c == 0) continue;
        const std::uint32_t j = up ? i + s : i - s;
        if (!present[j]) continue;
        m |= mask[uf.find(j)];
        root = uf.unite(root, j);
      }
    }
    mask[root] = m;
    if (LatticeGeometry::spans(m, dims)) return u[i];
  }
  return 1.0;
}

/// Fraction of trials (trial t uses its own stream) whose lattice at
/// occupation p has a cluster touching two opposite faces.
inline double spanning_probability(unsigned dims, std::uint32_t L, double p, std::uint64_t n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw std::domain_error("spanning_probability: n_trials must be at least 1");
  std::uint64_t hits = 0;
  for (std::uint64_t t = 0; t < n_trials; ++t) hits += p > spanning_threshold(dims, L, seed, t) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(n_trials);
}

/// Spanning probability at each of `ps`, sharing trials across p.
inline std::vector<double> spanning_curve(unsigned dims, std::uint32_t L, std::span<const double> ps,
                                          std::uint64_t n_trials, std::uint64_t seed) {
  if (n_trials < 1) throw std::domain_error("spanning_curve: n_trials must be at least 1");
  std::vector<double> thresholds(n_trials);
  for (std::uint64_t t = 0; t < n_trials; ++t) thresholds[t] = spanning_threshold(dims, L, seed, t);
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<double> out;
  for (double p : ps) {
    const auto below = std::lower_bound(thresholds.begin(), thresholds.end(), p) - thresholds.begin();
    out.push_back(static_cast<double>(below) / static_cast<double>(n_trials));
  }
  return out;
}

/// First p at which a sampled curve reaches `level`, by linear interpolation.
inline double crossing_point(std::span<const double> ps, std::span<const double> values, double level) {
  if (ps.size() != values.size() || ps.empty()) throw std::invalid_argument("crossing_point: bad curve");
  if (values[0] >= level) return ps[0];
  for (std::size_t i = 1; i < ps.size(); ++i)
    if (values[i] >= level)
      return ps[i - 1] + (level - values[i - 1]) / (values[i] - values[i - 1]) * (ps[i] - ps[i - 1]);
  throw std::domain_error("crossing_point: curve never reaches the level");
}

enum class Binning { none, log };

/// Fisher exponent estimate: minus the log-log slope of n_s over
/// [s_min, s_max]. With log binning, bin j covers sizes
/// [s_min r^j, s_min r^(j+1)) with r = 10^(1/bins_per_decade); each bin's
/// density is its cluster count over the number of integer sizes it holds.
inline double fit_size_exponent(const std::map<std::uint64_t, double>& n_s, std::uint64_t s_min, std::uint64_t s_max,
                                Binning binning = Binning::log, double bins_per_decade = 5.0) {
  if (s_min < 1 || s_max < s_min) throw std::domain_error("fit_size_exponent: bad window");
  std::vector<double> xs, ys;
  if (binning == Binning::none) {
    for (auto it = n_s.lower_bound(s_min); it != n_s.end() && it->first <= s_max; ++it)
      if (it->second > 0.0) {
        xs.push_back(static_cast<double>(it->first));
        ys.push_back(it->second);
      }
  } else {
    const double r = std::pow(10.0, 1.0 / bins_per_decade);
    double lo_edge = static_cast<double>(s_min);
    while (lo_edge <= static_cast<double>(s_max)) {
      const double hi_edge = lo_edge * r;
      const auto lo = static_cast<std::uint64_t>(std::ceil(lo_edge));
      const auto hi = std::min<std::uint64_t>(s_max, static_cast<std::uint64_t>(std::ceil(hi_edge)) - 1);
      lo_edge = hi_edge;
      if (hi < lo) continue;
      double total = 0.0;
      for (auto it = n_s.lower_bound(lo); it != n_s.end() && it->first <= hi; ++it) total += it->second;
      if (total > 0.0) {
        xs.push_back(std::sqrt(static_cast<double>(lo) * static_cast<double>(hi)));
        ys.push_back(total / static_cast<double>(hi - lo + 1));
      }
    }
  }
  if (xs.size() < 5) throw FitError("fit_size_exponent: insufficient bins (" + std::to_string(xs.size()) + " non-empty, need 5)");
  return -fit_loglog(xs, ys).slope;
}

inline std::map<std::uint64_t, double> size_density(const ClusterStats& st) {
  std::map<std::uint64_t, double> out;
  for (const auto& [s, c] : st.counts) out[s] = static_cast<double>(c) / static_cast<double>(st.volume);
  return out;
}

// --- rendering ---------------------------------------------------------------

namespace detail {

inline std::string label_color(std::uint32_t label, double shade) {
  const std::uint64_t h = mix64(label + 0x9e37ull);
  const double hue = static_cast<double>(h % 360);
  const double sat = 0.55 + 0.3 * static_cast<double>((h >> 16) % 100) / 100.0;
  const double light = (0.45 + 0.15 * static_cast<double>((h >> 32) % 100) / 100.0) * shade;
  // HSL to RGB
  const double c = (1.0 - std::abs(2.0 * light - 1.0)) * sat;
  const double hp = hue / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = light - c / 2.0;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
  return buf;
}

}  // namespace detail

/// SVG of a labeled lattice: occupied sites drawn as squares (2-D) or
/// isometric cubes (3-D), colored by a hash of their cluster label.
inline std::string render_lattice_svg(std::span<const std::uint32_t> labels, unsigned dims, std::uint32_t L,
                                      double cell = 12.0) {
  const LatticeGeometry geo{dims, L};
  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  if (dims == 2) {
    const double side = cell * L;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side << "\" viewBox=\"0 0 "
        << side << ' ' << side << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::uint32_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == kEmptySite) continue;
      svg << "<rect class=\"site\" x=\"" << geo.coord(i, 0) * cell << "\" y=\"" << (L - 1 - geo.coord(i, 1)) * cell
          << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << detail::label_color(labels[i], 1.0)
          << "\"/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
  }
  const double cx = cell * std::sqrt(3.0) / 2.0, cy = cell / 2.0;
  const double width = 2.0 * cx * L + 2 * cell, height = 2.0 * cy * L + cell * L + 2 * cell;
  const double ox = cx * L + cell, oy = cell * L + cell;
  auto project = [&](double x, double y, double z) {
    return std::pair{ox + (x - y) * cx, oy + (x + y) * cy - z * cell};
  };
  auto face = [&](std::ostringstream& out, std::initializer_list<std::array<double, 3>> corners, const std::string& fill) {
    out << "<polygon points=\"";
    bool first = true;
    for (const auto& c : corners) {
      const auto [px, py] = project(c[0], c[1], c[2]);
      out << (first ? "" : " ") << px << ',' << py;
      first = false;
    }
    out << "\" fill=\"" << fill << "\" stroke=\"#333\" stroke-width=\"0.3\"/>";
  };
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
      << width << ' ' << height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Back to front: cubes nearer the viewer (larger x + y, larger z) later.
  std::vector<std::uint32_t> order;
  for (std::uint32_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kEmptySite) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto key = [&](std::uint32_t s) {
      return std::pair{geo.coord(s, 0) + geo.coord(s, 1) + geo.coord(s, 2), geo.coord(s, 2)};
    };
    return key(a) < key(b);
  });
  for (std::uint32_t i : order) {
    const double x = geo.coord(i, 0), y = geo.coord(i, 1), z = geo.coord(i, 2);
    svg << "<g class=\"site\">";
    face(svg, {{x, y, z + 1}, {x + 1, y, z + 1}, {x + 1, y + 1, z + 1}, {x, y + 1, z + 1}}, detail::label_color(labels[i], 1.0));
    face(svg, {{x + 1, y, z}, {x + 1, y + 1, z}, {x + 1, y + 1, z + 1}, {x + 1, y, z + 1}}, detail::label_color(labels[i], 0.8));
    face(svg, {{x, y + 1, z}, {x + 1, y + 1, z}, {x + 1, y + 1, z + 1}, {x, y + 1, z + 1}}, detail::label_color(labels[i], 0.65));
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace perclaw
