// perclaw: command-line driver for the simulations, experiments and theory
// curves. Every subcommand writes a results directory with run.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "perclaw/perclaw.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace perclaw;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Context {
  const RunConfig& cfg;
  fs::path dir;
  bool quiet = false;
  json outputs = json::object();
  json result = json::object();

  fs::path file(const std::string& name) const { return dir / name; }

  void wrote(const std::string& name) { outputs[name] = git_blob_hash(read_file(file(name))); }

  void log(const std::string& msg) const {
    if (!quiet) std::cerr << msg << '\n';
  }
};

using Runner = void (*)(Context&);

struct Command {
  std::string name;
  std::string help;
  std::vector<ParamSpec> params;
  Runner run;
};

std::vector<ParamSpec> operator+(std::vector<ParamSpec> a, const std::vector<ParamSpec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// --- parameter groups ---------------------------------------------------------

std::vector<ParamSpec> sim_params() {
  return {{"seed", "0", "master seed"},
          {"d", "100", "lattice dimension (coordination 2d)"},
          {"p", "", "occupation probability; empty for the critical value 1/(2d-1)"},
          {"min_size", "300", "smallest accepted cluster"},
          {"max_size", "30000000", "growth aborts above this size"},
          {"n_clusters", "316", "clusters per dataset"},
          {"walk_std", "1", "random-walk step before standardization"}};
}

std::vector<ParamSpec> dataset_params() {
  return {{"dataset", "", "read this dataset container instead of simulating"}};
}

std::vector<ParamSpec> calibration_params() {
  return {{"grid_max", "16384", "largest train count of the calibration grid (powers of two)"},
          {"reps", "3", "split seeds averaged per cluster"},
          {"cal_seed", "0", "calibration split seed"},
          {"test_cap", "1000", "test sites per cluster: min(test_cap, size/2)"},
          {"threshold", "0.8", "a curve must drop below this loss to be fitted"},
          {"estimator", "bayesian", "bayesian or naive"},
          {"cache_dir", "", "calibration cache directory; empty disables"}};
}

std::vector<ParamSpec> theory_params() {
  return {{"alpha", "", "quanta exponent (default 1)"},
          {"tau", "", "Fisher exponent; alternative to --alpha"},
          {"c_over_d", "0.5", "manifold-approximation exponent c/D"},
          {"D", "4", "fractal dimension"}};
}

SimConfig sim_config(const RunConfig& cfg) {
  SimConfig c;
  c.seed = cfg.get_u64("seed");
  c.d = cfg.get_u32("d");
  if (!cfg.get("p").empty()) c.p = cfg.get_double("p");
  c.min_size = cfg.get_u64("min_size");
  c.max_size = cfg.get_u64("max_size");
  c.n_clusters = cfg.get_u32("n_clusters");
  c.walk_std = cfg.get_double("walk_std");
  c.validate();
  return c;
}

Estimator estimator(const RunConfig& cfg) {
  const auto& e = cfg.get("estimator");
  if (e == "bayesian") return Estimator::bayesian;
  if (e == "naive") return Estimator::naive;
  throw ConfigError("estimator", "estimator must be 'bayesian' or 'naive', got '" + e + "'");
}

CalibrationOptions calibration_options(const RunConfig& cfg) {
  CalibrationOptions o;
  o.grid_max = cfg.get_u32("grid_max");
  o.reps = cfg.get_u32("reps");
  o.seed = cfg.get_u64("cal_seed");
  o.test_cap = cfg.get_u32("test_cap");
  o.failure_threshold = cfg.get_double("threshold");
  o.c_over_D = cfg.get_double("c_over_d");
  o.estimator = estimator(cfg);
  o.validate();
  return o;
}

TheoryParams theory_from(const RunConfig& cfg, double c_over_D) {
  const bool has_alpha = !cfg.get("alpha").empty(), has_tau = !cfg.get("tau").empty();
  if (has_alpha && has_tau) throw ConfigError("tau", "give either --alpha or --tau, not both");
  double alpha = 1.0;
  if (has_alpha) alpha = cfg.get_double("alpha");
  if (has_tau) {
    const double tau = cfg.get_double("tau");
    if (!(tau > 2.0 && tau < 3.0)) throw ConfigError("tau", "tau must lie in (2, 3) for a positive alpha");
    alpha = alpha_from_tau(tau);
  }
  if (!(alpha > 0.0)) throw ConfigError("alpha", "alpha must be positive");
  const double D = cfg.get_double("D");
  if (!(D > 0.0)) throw ConfigError("D", "D must be positive");
  if (!(c_over_D > 0.0)) throw ConfigError("c_over_d", "c_over_d must be positive");
  return TheoryParams::from_alpha(alpha, c_over_D, D);
}

Dataset load_dataset(Context& ctx) {
  const auto& path = ctx.cfg.get("dataset");
  Dataset ds;
  if (path.empty()) {
    const auto cfg = sim_config(ctx.cfg);
    ctx.log("simulating dataset (seed " + std::to_string(cfg.seed) + ")");
    ds = generate_dataset(cfg);
  } else {
    ds = read_dataset(path);
  }
  ctx.result["dataset_sha1"] = dataset_hash(ds);
  ctx.result["total_sites"] = ds.total_sites();
  return ds;
}

json calibration_summary(const Calibration& cal) {
  const auto m = cal.m_values();
  json j;
  j["median_m"] = cal.median_m;
  j["min_m"] = *std::min_element(m.begin(), m.end());
  j["max_m"] = *std::max_element(m.begin(), m.end());
  j["n_failed"] = cal.n_failed;
  j["warnings"] = cal.warnings;
  return j;
}

// --- subcommands ------------------------------------------------------------------

void run_simulate(Context& ctx) {
  const auto cfg = sim_config(ctx.cfg);
  const Dataset ds = generate_dataset(cfg);
  write_dataset(ds, ctx.file("dataset.pclw"));
  ctx.wrote("dataset.pclw");
  const std::string hash = dataset_hash(ds);
  std::ofstream(ctx.file("dataset.json")) << dataset_sidecar(ds, hash).dump(2) << '\n';
  ctx.wrote("dataset.json");
  ctx.result["dataset_sha1"] = hash;
  ctx.result["total_sites"] = ds.total_sites();
  ctx.result["largest_cluster"] = ds.clusters.front().size();
  ctx.result["n_attempts"] = ds.n_attempts;
}

void run_lattice(Context& ctx) {
  const auto& c = ctx.cfg;
  LatticeConfig base{c.get_u32("dims"), c.get_u32("L"), c.get_double("p"), c.get_u64("seed")};
  base.validate();
  const double p_min = c.get_double("p_min"), p_max = c.get_double("p_max");
  const auto p_points = c.get_u32("p_points");
  const auto trials = c.get_u64("trials");
  if (!(0.0 <= p_min && p_min < p_max && p_max <= 1.0)) throw ConfigError("p_max", "need 0 <= p_min < p_max <= 1");
  if (p_points < 2) throw ConfigError("p_points", "p_points must be at least 2");
  if (trials < 1) throw ConfigError("trials", "trials must be at least 1");

  std::vector<double> ps, prob;
  CsvWriter per_trial(ctx.file("trials.csv"), {"p", "trial", "largest_size", "spans"});
  for (std::uint32_t i = 0; i < p_points; ++i) {
    LatticeConfig cfg = base;
    cfg.p = p_min + (p_max - p_min) * i / (p_points - 1);
    std::uint64_t hits = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      const auto lab = occupy_and_label(cfg, t);
      per_trial.row(cfg.p, t, lab.stats.largest_size, lab.stats.any_spans);
      hits += lab.stats.any_spans ? 1 : 0;
    }
    ps.push_back(cfg.p);
    prob.push_back(static_cast<double>(hits) / static_cast<double>(trials));
  }
  per_trial.close();
  ctx.wrote("trials.csv");
  CsvWriter span(ctx.file("spanning.csv"), {"p", "spanning_probability"});
  for (std::size_t i = 0; i < ps.size(); ++i) span.row(ps[i], prob[i]);
  span.close();
  ctx.wrote("spanning.csv");
  try {
    ctx.result["crossing_p"] = crossing_point(ps, prob, 0.5);
  } catch (const std::domain_error&) {
    ctx.result["crossing_p"] = nullptr;
  }

  // Cluster-size histogram pooled over trials at p.
  const auto hist_trials = c.get_u64("hist_trials");
  std::map<std::uint64_t, std::uint64_t> counts;
  std::uint64_t volume = 0;
  for (std::uint64_t t = 0; t < hist_trials; ++t) {
    const auto lab = occupy_and_label(base, t);
    for (const auto& [s, n] : lab.stats.counts) counts[s] += n;
    volume += lab.stats.volume;
  }
  std::map<std::uint64_t, double> n_s;
  CsvWriter hist(ctx.file("histogram.csv"), {"s", "n_s"});
  for (const auto& [s, n] : counts) {
    n_s[s] = static_cast<double>(n) / static_cast<double>(volume);
    hist.row(s, n_s[s]);
  }
  hist.close();
  ctx.wrote("histogram.csv");
  try {
    ctx.result["tau_estimate"] = fit_size_exponent(n_s, c.get_u64("tau_s_min"), c.get_u64("tau_s_max"));
  } catch (const FitError& e) {
    ctx.result["tau_estimate"] = nullptr;
    ctx.log(std::string("tau fit skipped: ") + e.what());
  }

  LatticeConfig shown = base;
  shown.L = c.get_u32("render_l");
  shown.validate();
  const auto lab = occupy_and_label(shown, 0);
  std::ofstream(ctx.file("lattice.svg")) << render_lattice_svg(lab.labels, shown.dims, shown.L);
  ctx.wrote("lattice.svg");

  const std::vector<Series> series{{.label = "spanning probability", .style = SeriesStyle::markers, .x = ps, .y = prob}};
  PlotSpec spec{.title = "spanning probability, L = " + std::to_string(base.L),
                .x = {.label = "p", .scale = AxisScale::linear},
                .y = {.label = "P(span)", .scale = AxisScale::linear, .min = 0.0, .max = 1.0}};
  emit_svg_plot(series, spec, ctx.file("spanning.svg"));
  ctx.wrote("spanning.svg");
}

void write_calibration_outputs(Context& ctx, const Calibration& cal) {
  write_calibration_csv(cal, ctx.file("calibration.csv"));
  ctx.wrote("calibration.csv");
  CsvWriter curves(ctx.file("calibration_curves.csv"), {"rank", "P", "loss"});
  for (const auto& c : cal.clusters)
    for (std::size_t i = 0; i < c.grid.size(); ++i) curves.row(c.rank, c.grid[i], c.loss[i]);
  curves.close();
  ctx.wrote("calibration_curves.csv");

  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c"};
  std::vector<Series> series;
  for (std::size_t k = 0; k < std::min<std::size_t>(3, cal.clusters.size()); ++k) {
    const auto& c = cal.clusters[k];
    if (c.grid.empty()) continue;
    Series meas{.label = "rank " + std::to_string(c.rank) + " (m = " + format_double(std::round(c.m * 10) / 10) + ")",
                .style = SeriesStyle::markers, .x = c.grid, .y = c.loss, .color = colors[k]};
    Series fit{.style = SeriesStyle::line, .color = colors[k], .dashed = true};
    for (double P = 1; P <= c.grid.back() * 1.0001; P *= 1.25) {
      fit.x.push_back(P);
      fit.y.push_back(broken_power_law(P, c.m, ctx.cfg.get_double("c_over_d")));
    }
    series.push_back(std::move(meas));
    series.push_back(std::move(fit));
  }
  if (!series.empty()) {
    PlotSpec spec{.title = "single-cluster scaling", .x = {.label = "training points P"}, .y = {.label = "MSE"}};
    emit_svg_plot(series, spec, ctx.file("single_cluster.svg"));
    ctx.wrote("single_cluster.svg");
  }
}

void run_calibrate(Context& ctx) {
  const Dataset ds = load_dataset(ctx);
  auto opt = calibration_options(ctx.cfg);
  const Calibration cal = calibrate_cached(ds, opt, ctx.cfg.get("cache_dir"));
  for (const auto& w : cal.warnings) ctx.log("warning: " + w);
  write_calibration_outputs(ctx, cal);
  ctx.result["calibration"] = calibration_summary(cal);
  json slopes = json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(3, cal.clusters.size()); ++k)
    slopes.push_back(std::isfinite(cal.clusters[k].slope) ? json(cal.clusters[k].slope) : json(nullptr));
  ctx.result["top3_post_break_slopes"] = slopes;
}

void run_sweep(Context& ctx) {
  const auto& c = ctx.cfg;
  const Dataset ds = load_dataset(ctx);
  const auto copt = calibration_options(c);
  const Calibration cal = calibrate_cached(ds, copt, c.get("cache_dir"));
  write_calibration_outputs(ctx, cal);
  ctx.result["calibration"] = calibration_summary(cal);

  SweepOptions opt;
  opt.b_min = c.get_double("b_min");
  opt.b_max = c.get_double("b_max");
  opt.kbr_min = c.get_double("kbr_min");
  opt.kbr_max = c.get_double("kbr_max");
  opt.n_samples = c.get_u32("n_samples");
  opt.seed = c.get_u64("sweep_seed");
  opt.split_seed = c.get_u64("split_seed");
  opt.theory = theory_from(c, c.get_double("c_over_d"));
  opt.curves.test_cap = copt.test_cap;
  opt.curves.estimator = copt.estimator;
  const auto Ns = c.get_doubles("n");
  const auto results = dof_sweep(ds, cal, Ns, opt);
  write_sweep_csv(results, ctx.file("sweep.csv"));
  ctx.wrote("sweep.csv");

  json per_n = json::array();
  for (const auto& r : results) {
    json j;
    j["N"] = r.N;
    j["theory"] = {{"b", r.theory.b}, {"k_br", r.theory.k_br}, {"loss", r.theory.loss}, {"rank", r.theory_rank},
                   {"fraction_better", r.theory_percentile()}};
    const auto& best = r.cells[r.best];
    j["best"] = {{"b", best.b}, {"k_br", best.k_br}, {"loss", best.loss}};
    per_n.push_back(j);

    std::vector<double> losses;
    for (const auto& cell : r.cells) losses.push_back(cell.loss);
    const double cut = percentile(losses, 10.0);
    Series rest{.label = "sampled cells", .style = SeriesStyle::scatter, .color = "#bbbbbb"};
    Series top{.label = "best 10%", .style = SeriesStyle::scatter, .color = "#1f77b4"};
    for (const auto& cell : r.cells) {
      auto& s = cell.loss <= cut ? top : rest;
      s.x.push_back(cell.b);
      s.y.push_back(cell.k_br);
    }
    Series th{.label = "theory", .style = SeriesStyle::markers, .x = {r.theory.b}, .y = {r.theory.k_br}, .color = "#d62728"};
    const std::vector<Series> series{rest, top, th};
    PlotSpec spec{.title = "DOF sweep, N = " + format_double(r.N),
                  .x = {.label = "b", .scale = AxisScale::linear},
                  .y = {.label = "k_br"}};
    const std::string name = "sweep_N" + format_double(r.N) + ".svg";
    emit_svg_plot(series, spec, ctx.file(name));
    ctx.wrote(name);
  }
  ctx.result["sweeps"] = per_n;
}

std::vector<ParamSpec> scaling_params(const std::string& grid_key, const std::string& grid_default) {
  return sim_params() + calibration_params() + theory_params() +
         std::vector<ParamSpec>{{"n_seeds", "50", "datasets (seeds)"},
                                {grid_key, grid_default, "scale grid: lo:hi[:count] (log-spaced) or a list"},
                                {"band", "16,84", "percentiles of the across-seed band"}};
}

void run_scaling_command(Context& ctx, CurveKind kind) {
  const auto& c = ctx.cfg;
  ScalingOptions o;
  o.sim = sim_config(c);
  o.master_seed = c.get_u64("seed");
  o.n_seeds = c.get_u32("n_seeds");
  o.theory = theory_from(c, c.get_double("c_over_d"));
  o.calibration = calibration_options(c);
  o.curves.test_cap = o.calibration.test_cap;
  o.curves.estimator = o.calibration.estimator;
  o.cache_dir = c.get("cache_dir");
  const auto band = c.get_doubles("band");
  if (band.size() != 2) throw ConfigError("band", "band needs two percentiles, e.g. 16,84");
  o.band_lo = band[0];
  o.band_hi = band[1];
  if (kind == CurveKind::model) {
    o.model_grid = c.get_grid("n_grid", 10);
  } else {
    o.data_grid = c.get_grid("d_grid", 10);
    for (auto& x : o.data_grid) x = std::round(x);
    o.apply_m_to_data = c.get_bool("apply_m");
  }
  o.log = [&](const std::string& s) { ctx.log(s); };
  const auto r = run_scaling(o);
  const ScalingCurve& curve = kind == CurveKind::model ? *r.model : *r.data;

  write_curve_csv(curve, ctx.file("curve.csv"));
  ctx.wrote("curve.csv");
  CsvWriter seeds(ctx.file("seeds.csv"), {"seed_index", "dataset_seed", "median_m", "scale", "loss"});
  for (std::size_t s = 0; s < curve.seed_loss.size(); ++s)
    for (std::size_t g = 0; g < curve.points.size(); ++g)
      seeds.row(s, r.dataset_seeds[s], r.median_m[s], curve.points[g].scale, curve.seed_loss[s][g]);
  seeds.close();
  ctx.wrote("seeds.csv");
  PlotSpec spec{.title = std::string(kind == CurveKind::model ? "model" : "data") + " scaling, " +
                         std::to_string(o.n_seeds) + " seeds",
                .x = {.label = kind == CurveKind::model ? "DOF N" : "training points"},
                .y = {.label = "loss"}};
  emit_svg_plot(scaling_series(curve), spec, ctx.file("curve.svg"));
  ctx.wrote("curve.svg");
  ctx.result["anchor_scale"] = curve.anchor_scale;
  ctx.result["anchor_factor"] = curve.anchor_factor;
  ctx.result["agreement"] = curve.agreement();
  ctx.result["monotonicity_violations"] = curve.monotonicity_violations();
  ctx.result["dataset_seeds"] = r.dataset_seeds;
}

void run_scale_model(Context& ctx) { run_scaling_command(ctx, CurveKind::model); }
void run_scale_data(Context& ctx) { run_scaling_command(ctx, CurveKind::data); }

void run_theory(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto& kind_s = c.get("kind");
  CurveKind kind;
  if (kind_s == "model") kind = CurveKind::model;
  else if (kind_s == "data") kind = CurveKind::data;
  else throw ConfigError("kind", "kind must be 'model' or 'data', got '" + kind_s + "'");
  const auto grid = c.get_grid("scale_grid", c.get_u32("points"));
  if (grid.front() < 2.0) throw ConfigError("scale_grid", "scales must be at least 2");
  const auto cds = c.get_doubles("c_over_d");
  std::vector<TheoryParams> params;
  for (double cd : cds) params.push_back(theory_from(c, cd));

  std::vector<std::string> header{"scale"};
  for (double cd : cds) header.push_back(cds.size() == 1 ? "loss" : "loss_cd" + format_double(cd));
  std::ofstream out(ctx.file("theory.csv"), std::ios::binary);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
  std::vector<Series> series(cds.size());
  for (double x : grid) {
    out << format_double(x);
    for (std::size_t j = 0; j < params.size(); ++j) {
      const double y = theory_loss(kind, x, params[j]);
      out << ',' << format_double(y);
      series[j].x.push_back(x);
      series[j].y.push_back(y);
    }
    out << '\n';
  }
  out.close();
  if (!out) throw std::runtime_error("write failed: " + ctx.file("theory.csv").string());
  ctx.wrote("theory.csv");
  for (std::size_t j = 0; j < series.size(); ++j) {
    series[j].label = "c/D = " + format_double(cds[j]);
    series[j].color = colors[j % std::size(colors)];
  }
  PlotSpec spec{.title = std::string(kind == CurveKind::model ? "model" : "data") + " scaling, alpha = " +
                         format_double(params.front().alpha()),
                .x = {.label = kind == CurveKind::model ? "DOF N" : "data size"},
                .y = {.label = "loss (up to a constant)"}};
  emit_svg_plot(series, spec, ctx.file("theory.svg"));
  ctx.wrote("theory.svg");
  json slopes = json::object();
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double a = grid[grid.size() - 2], b = grid.back();
    slopes[format_double(cds[j])] =
        std::log(theory_loss(kind, b, params[j]) / theory_loss(kind, a, params[j])) / std::log(b / a);
  }
  ctx.result["final_local_slope"] = slopes;
}

void run_loss_reduction(Context& ctx) {
  const auto& c = ctx.cfg;
  const double p = c.get_double("p"), L = c.get_double("L");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p", "p must lie in (0, 1)");
  if (!(L > 0.0)) throw ConfigError("L", "L must be positive");
  auto grid = c.get_grid("r_s", c.get_u32("points"));
  if (grid.back() > L) throw ConfigError("r_s", "R_s values must not exceed L");
  CsvWriter w(ctx.file("loss_reduction.csv"), {"r_s", "delta", "exact", "linearized"});
  Series exact{.label = "exact", .style = SeriesStyle::line};
  Series lin{.label = "linearized", .style = SeriesStyle::line, .color = "#d62728", .dashed = true};
  for (double r : grid) {
    const auto t = task_loss_reduction(p, L, r);
    w.row(r, t.delta, t.exact, t.linearized);
    exact.x.push_back(r);
    exact.y.push_back(t.exact);
    lin.x.push_back(r);
    lin.y.push_back(t.linearized);
  }
  w.close();
  ctx.wrote("loss_reduction.csv");
  const std::vector<Series> series{exact, lin};
  PlotSpec spec{.title = "task loss change, p = " + format_double(p),
                .x = {.label = "R_s"},
                .y = {.label = "loss change", .scale = AxisScale::linear}};
  emit_svg_plot(series, spec, ctx.file("loss_reduction.svg"));
  ctx.wrote("loss_reduction.svg");
  ctx.result["linear_coefficient"] = (1.0 - p + std::log(p)) / (p * L);
}

void run_fit_powerlaw(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto xc = c.get_u32("x_col"), yc = c.get_u32("y_col");
  if (xc == yc) throw ConfigError("y_col", "x_col and y_col must differ");
  const fs::path input = c.get("input");
  if (!fs::exists(input)) throw ConfigError("input", "input file not found: " + input.string());
  const auto cols = read_numeric_csv(input, std::max(xc, yc) + 1);
  const auto fit = power_law_fit(cols[xc], cols[yc]);
  ctx.result["C"] = fit.C;
  ctx.result["beta"] = fit.beta;
  ctx.result["stderr_beta"] = fit.stderr_beta;
  ctx.result["n"] = fit.n;
  ctx.result["input_sha1"] = sha1_hex(read_file(input));
  std::cout << "C = " << format_double(fit.C) << ", beta = " << format_double(fit.beta) << " +/- "
            << format_double(fit.stderr_beta) << " (" << fit.n << " points)\n";
}

std::vector<Command> commands() {
  return {
      {"simulate", "simulate a Bethe-lattice cluster dataset", sim_params(), run_simulate},
      {"lattice", "hypercubic site percolation: spanning, cluster sizes, rendering",
       {{"dims", "3", "2 or 3"},
        {"L", "30", "side length"},
        {"p", "0.3116", "occupation for the histogram and rendering"},
        {"p_min", "0.28", "spanning sweep start"},
        {"p_max", "0.35", "spanning sweep end"},
        {"p_points", "15", "spanning sweep points (linear)"},
        {"trials", "400", "trials per p"},
        {"hist_trials", "20", "trials pooled into the size histogram"},
        {"tau_s_min", "10", "size window for the tau estimate"},
        {"tau_s_max", "1000", "size window for the tau estimate"},
        {"render_l", "16", "side length of the rendered lattice"},
        {"seed", "0", "master seed"}},
       run_lattice},
      {"calibrate", "fit the per-cluster scale factor m", sim_params() + dataset_params() + calibration_params() +
                                                              std::vector<ParamSpec>{{"c_over_d", "0.5", "post-break exponent"}},
       run_calibrate},
      {"sweep", "loss over random (b, k_br) allocations",
       sim_params() + dataset_params() + calibration_params() + theory_params() +
           std::vector<ParamSpec>{{"n", "250,500,1000", "DOF totals"},
                                  {"n_samples", "2000", "cells per N"},
                                  {"b_min", "-1.5", "b range"},
                                  {"b_max", "1", "b range"},
                                  {"kbr_min", "2", "k_br range"},
                                  {"kbr_max", "316", "k_br range"},
                                  {"sweep_seed", "0", "cell sampling seed"},
                                  {"split_seed", "0", "evaluation split seed"}},
       run_sweep},
      {"scale-model", "loss against DOF over many datasets", scaling_params("n_grid", "1e1:1e4:10"), run_scale_model},
      {"scale-data", "loss against training-set size over many datasets",
       scaling_params("d_grid", "1e1:1e4:10") +
           std::vector<ParamSpec>{{"apply_m", "false", "scale sampled per-cluster counts by m"}},
       run_scale_data},
      {"theory", "closed-form scaling curves",
       theory_params() + std::vector<ParamSpec>{{"kind", "model", "model or data"},
                                                {"scale_grid", "1e1:1e8", "lo:hi[:count] or a list"},
                                                {"points", "29", "grid points when the count is omitted"}},
       run_theory},
      {"loss-reduction", "task loss change from a cluster of radius R_s",
       {{"p", "0.5", "probability of the task"},
        {"L", "1000", "task length"},
        {"r_s", "1e-3:1000", "R_s grid"},
        {"points", "31", "grid points when the count is omitted"}},
       run_loss_reduction},
      {"fit-powerlaw", "fit y = C x^beta to two CSV columns",
       {{"input", "", "CSV file", true}, {"x_col", "0", "column of x"}, {"y_col", "1", "column of y"}},
       run_fit_powerlaw},
  };
}

/// Runs a resolved command into `dir` and writes run.json there.
json execute(const Command& cmd, const RunConfig& cfg, const fs::path& dir, bool quiet) {
  cfg.check_required();
  fs::create_directories(dir);
  Context ctx{cfg, dir, quiet};
  const auto t0 = std::chrono::steady_clock::now();
  cmd.run(ctx);
  json run;
  run["tool"] = "perclaw";
  run["version"] = kToolVersion;
  run["command"] = cmd.name;
  run["params"] = cfg.to_json();
  json sources = json::object();
  for (const auto& s : cfg.specs()) sources[s.key] = to_string(cfg.source(s.key));
  run["sources"] = sources;
  run["outputs"] = ctx.outputs;
  run["result"] = ctx.result;
  std::ofstream(dir / "run.json") << run.dump(2) << '\n';
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!quiet) std::cerr << cmd.name << ": wrote " << dir.string() << " in " << format_double(std::round(secs * 10) / 10) << " s\n";
  return run;
}

int replay(const std::vector<Command>& cmds, const fs::path& run_path, const fs::path& dir, bool quiet) {
  json original;
  try {
    original = json::parse(read_file(run_path));
  } catch (const json::exception& e) {
    throw ConfigError("run", "cannot parse " + run_path.string() + ": " + e.what());
  }
  const auto name = original.value("command", std::string{});
  const auto it = std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return c.name == name; });
  if (it == cmds.end()) throw ConfigError("run", "run.json names unknown command '" + name + "'");
  RunConfig cfg(it->name, it->params);
  for (const auto& [key, value] : original.at("params").items()) cfg.set(key, value.get<std::string>(), ParamSource::flag);
  const json again = execute(*it, cfg, dir, quiet);
  bool same = true;
  for (const auto& [file, hash] : original.at("outputs").items()) {
    const bool match = again["outputs"].contains(file) && again["outputs"][file] == hash;
    same &= match;
    std::cout << (match ? "same     " : "DIFFERS  ") << file << '\n';
  }
  std::cout << (same ? "replay identical\n" : "replay differs\n");
  return same ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const auto cmds = commands();
  CLI::App app{"perclaw: percolation-based scaling-law experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Bound {
    CLI::App* sub;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    std::string config;
    std::string out;
    bool quiet = false;
  };
  std::vector<Bound> bound(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    auto& b = bound[i];
    b.sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    b.sub->add_option("--config", b.config, "config file (key = value, [section] per subcommand)");
    b.sub->add_option("--out", b.out, "results directory (default ./perclaw-" + cmds[i].name + ")");
    b.sub->add_flag("--quiet", b.quiet, "no progress output");
    for (const auto& p : cmds[i].params) {
      std::string help = p.help;
      if (p.required) help += " (required)";
      else if (!p.default_value.empty()) help += " (default " + p.default_value + ")";
      b.options[p.key] = b.sub->add_option(flag_name(p.key), b.values[p.key], help);
    }
  }
  std::string replay_run, replay_out;
  bool replay_quiet = false;
  auto* replay_cmd = app.add_subcommand("replay", "re-execute a run.json and compare its outputs");
  replay_cmd->add_option("--run", replay_run, "run.json of the original run")->required();
  replay_cmd->add_option("--out", replay_out, "results directory for the re-run")->required();
  replay_cmd->add_flag("--quiet", replay_quiet, "no progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "perclaw: " << e.what() << '\n';
    return 2;
  }

  try {
    if (replay_cmd->parsed()) return replay(cmds, replay_run, replay_out, replay_quiet);
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      auto& b = bound[i];
      if (!b.sub->parsed()) continue;
      RunConfig cfg(cmds[i].name, cmds[i].params);
      if (!b.config.empty()) cfg.load_file(b.config);
      for (const auto& p : cmds[i].params)
        if (b.options[p.key]->count() > 0) cfg.set(p.key, b.values[p.key], ParamSource::flag);
      execute(cmds[i], cfg, b.out.empty() ? fs::path("perclaw-" + cmds[i].name) : fs::path(b.out), b.quiet);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "perclaw: configuration error [" << e.key() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "perclaw: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
