#pragma once

// Minimal standalone SVG line/marker/band plots with linear or log axes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace perclaw {

enum class SeriesStyle { line, markers, band, scatter };
enum class AxisScale { linear, log };

struct Series {
  std::string label{};
  SeriesStyle style = SeriesStyle::line;
  std::vector<double> x{};
  std::vector<double> y{};   ///< unused for bands
  std::vector<double> lo{};  ///< bands only
  std::vector<double> hi{};  ///< bands only
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct Axis {
  std::string label{};
  AxisScale scale = AxisScale::log;
  std::optional<double> min{};
  std::optional<double> max{};
};

struct PlotSpec {
  std::string title{};
  Axis x{};
  Axis y{};
  double width = 640;
  double height = 440;
};

class PlotError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Mapper {
  AxisScale scale;
  double lo, hi;      // data range, already transformed
  double p0, p1;      // pixel range

  double transform(double v) const { return scale == AxisScale::log ? std::log10(v) : v; }
  double operator()(double v) const { return p0 + (transform(v) - lo) / (hi - lo) * (p1 - p0); }
};

inline void validate_series(const Series& s, const PlotSpec& spec) {
  const std::string who = "series '" + s.label + "': ";
  if (s.x.empty()) throw PlotError(who + "no points");
  auto check = [&](const std::vector<double>& v, const Axis& axis, const char* name) {
    if (v.size() != s.x.size()) throw PlotError(who + name + " has " + std::to_string(v.size()) + " values, x has " +
                                                std::to_string(s.x.size()));
    for (double d : v) {
      if (!std::isfinite(d)) throw PlotError(who + name + " is not finite");
      if (axis.scale == AxisScale::log && !(d > 0.0)) throw PlotError(who + name + " must be positive on a log axis");
    }
  };
  check(s.x, spec.x, "x");
  if (s.style == SeriesStyle::band) {
    check(s.lo, spec.y, "lo");
    check(s.hi, spec.y, "hi");
    for (std::size_t i = 0; i < s.lo.size(); ++i)
      if (s.lo[i] > s.hi[i]) throw PlotError(who + "band lower edge exceeds upper edge at point " + std::to_string(i));
  } else {
    check(s.y, spec.y, "y");
  }
}

inline std::vector<double> ticks(const Axis& axis, double lo, double hi) {
  std::vector<double> out;
  if (axis.scale == AxisScale::log) {
    const double span = hi - lo;  // decades
    const std::vector<double> mult = span < 1.5 ? std::vector<double>{1, 2, 5} : std::vector<double>{1};
    const int step = span > 10 ? 2 : 1;
    for (int e = static_cast<int>(std::floor(lo)); e <= static_cast<int>(std::ceil(hi)); e += step)
      for (double m : mult) {
        const double v = m * std::pow(10.0, e);
        const double lv = std::log10(v);
        if (lv >= lo - 1e-9 && lv <= hi + 1e-9) out.push_back(v);
      }
    return out;
  }
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return out;
}

inline std::pair<double, double> data_range(std::span<const Series> series, bool y_axis, const Axis& axis) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto take = [&](const std::vector<double>& v) {
    for (double d : v) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  };
  for (const auto& s : series) {
    if (!y_axis) take(s.x);
    else if (s.style == SeriesStyle::band) {
      take(s.lo);
      take(s.hi);
    } else {
      take(s.y);
    }
  }
  if (axis.min) lo = *axis.min;
  if (axis.max) hi = *axis.max;
  if (axis.scale == AxisScale::log) {
    if (!(lo > 0.0)) throw PlotError("axis '" + axis.label + "': log axis needs positive limits");
    lo = std::log10(lo);
    hi = std::log10(hi);
    if (!axis.min) lo = std::floor(lo * 10.0 - 1e-9) / 10.0;
    if (!axis.max) hi = std::ceil(hi * 10.0 + 1e-9) / 10.0;
  }
  if (!(hi > lo)) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
  return {lo, hi};
}

}  // namespace detail

/// Renders the series into a standalone SVG document. Elements carry class
/// attributes (band, line, markers, scatter) naming their series style.
inline std::string render_svg_plot(std::span<const Series> series, const PlotSpec& spec) {
  using namespace detail;
  if (series.empty()) throw PlotError("plot: no series");
  for (const auto& s : series) validate_series(s, spec);

  const double left = 70, right = 20, top = spec.title.empty() ? 20 : 40, bottom = 55;
  const auto [xlo, xhi] = data_range(series, false, spec.x);
  const auto [ylo, yhi] = data_range(series, true, spec.y);
  const Mapper mx{spec.x.scale, xlo, xhi, left, spec.width - right};
  const Mapper my{spec.y.scale, ylo, yhi, spec.height - bottom, top};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(spec.width) << "\" height=\"" << num(spec.height)
    << "\" viewBox=\"0 0 " << num(spec.width) << ' ' << num(spec.height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<defs><clipPath id=\"plot-area\"><rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\""
    << num(spec.width - left - right) << "\" height=\"" << num(spec.height - top - bottom) << "\"/></clipPath></defs>\n";
  if (!spec.title.empty())
    o << "<text class=\"title\" x=\"" << num(spec.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(spec.title) << "</text>\n";

  // grid and ticks
  o << "<g class=\"axes\" stroke=\"#ccc\" stroke-width=\"0.5\">\n";
  for (double t : ticks(spec.x, xlo, xhi)) {
    const double px = mx(t);
    o << "<line x1=\"" << num(px) << "\" y1=\"" << num(top) << "\" x2=\"" << num(px) << "\" y2=\""
      << num(spec.height - bottom) << "\"/>\n";
    o << "<text stroke=\"none\" fill=\"black\" x=\"" << num(px) << "\" y=\"" << num(spec.height - bottom + 16)
      << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : ticks(spec.y, ylo, yhi)) {
    const double py = my(t);
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(py) << "\" x2=\"" << num(spec.width - right) << "\" y2=\""
      << num(py) << "\"/>\n";
    o << "<text stroke=\"none\" fill=\"black\" x=\"" << num(left - 6) << "\" y=\"" << num(py + 4)
      << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(spec.width - left - right)
    << "\" height=\"" << num(spec.height - top - bottom) << "\" fill=\"none\" stroke=\"black\"/>\n</g>\n";
  o << "<text x=\"" << num((left + spec.width - right) / 2) << "\" y=\"" << num(spec.height - 12)
    << "\" text-anchor=\"middle\">" << xml_escape(spec.x.label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num((top + spec.height - bottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << num((top + spec.height - bottom) / 2) << ")\">" << xml_escape(spec.y.label) << "</text>\n";

  o << "<g clip-path=\"url(#plot-area)\">\n";
  for (const auto& s : series) {
    const std::string color = xml_escape(s.color);
    switch (s.style) {
      case SeriesStyle::band: {
        o << "<path class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\" d=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " L" : "M") << num(mx(s.x[i])) << ',' << num(my(s.hi[i]));
        for (std::size_t i = s.x.size(); i-- > 0;) o << " L" << num(mx(s.x[i])) << ',' << num(my(s.lo[i]));
        o << " Z\"/>\n";
        break;
      }
      case SeriesStyle::line: {
        o << "<polyline class=\"line\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\""
          << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << num(mx(s.x[i])) << ',' << num(my(s.y[i]));
        o << "\"/>\n";
        break;
      }
      case SeriesStyle::markers:
      case SeriesStyle::scatter: {
        const bool joined = s.style == SeriesStyle::markers;
        o << "<g class=\"" << (joined ? "markers" : "scatter") << "\" fill=\"" << color << "\">";
        if (joined && s.x.size() > 1) {
          o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
          for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << num(mx(s.x[i])) << ',' << num(my(s.y[i]));
          o << "\"/>";
        }
        for (std::size_t i = 0; i < s.x.size(); ++i)
          o << "<circle cx=\"" << num(mx(s.x[i])) << "\" cy=\"" << num(my(s.y[i])) << "\" r=\"" << (joined ? 3.5 : 2) << "\"/>";
        o << "</g>\n";
        break;
      }
    }
  }
  o << "</g>\n";

  // legend
  double ly = top + 14;
  o << "<g class=\"legend\">\n";
  for (const auto& s : series) {
    if (s.label.empty()) continue;
    const double lx = spec.width - right - 170;
    o << "<rect x=\"" << num(lx) << "\" y=\"" << num(ly - 8) << "\" width=\"14\" height=\"8\" fill=\"" << xml_escape(s.color)
      << "\"" << (s.style == SeriesStyle::band ? " fill-opacity=\"0.25\"" : "") << "/>";
    o << "<text x=\"" << num(lx + 20) << "\" y=\"" << num(ly) << "\">" << xml_escape(s.label) << "</text>\n";
    ly += 16;
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

inline void emit_svg_plot(std::span<const Series> series, const PlotSpec& spec, const std::filesystem::path& path) {
  const std::string svg = render_svg_plot(series, spec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << svg;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace perclaw
