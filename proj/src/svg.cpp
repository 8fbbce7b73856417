#include "isf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace isf::svg {

namespace {

constexpr double kW = 720, kH = 440, kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string fmt(double v) {
  char buf[32];
  const double a = std::fabs(v);
  if (a != 0 && (a < 1e-3 || a >= 1e5)) {
    std::snprintf(buf, sizeof buf, "%.0e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  }
  return buf;
}

struct Axis {
  double lo, hi;
  bool log;
  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double p = std::floor(std::log10(lo)); p <= std::ceil(std::log10(hi)); ++p) {
        const double v = std::pow(10.0, p);
        if (v >= lo * 0.999 && v <= hi * 1.001) t.push_back(v);
      }
      if (t.size() < 2) t = {lo, hi};
    } else {
      for (int i = 0; i <= 5; ++i) t.push_back(lo + (hi - lo) * i / 5.0);
    }
    return t;
  }
};

Axis make_axis(double lo, double hi, bool log) {
  if (log) {
    if (lo <= 0) throw std::invalid_argument("log axis needs positive values");
    lo = std::pow(10.0, std::floor(std::log10(lo)));
    hi = std::pow(10.0, std::ceil(std::log10(hi)));
    if (lo == hi) hi = lo * 10;
  } else {
    lo = std::min(lo, 0.0);
    if (hi <= lo) hi = lo + 1;
    hi *= 1.05;
  }
  return {lo, hi, log};
}

void frame(std::ostringstream& o, const std::string& title, const std::string& xl, const std::string& yl) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n"
    << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << esc(xl)
    << "</text>\n"
    << "<text transform=\"translate(18," << (kTop + kH - kBottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << esc(yl) << "</text>\n"
    << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight << "\" height=\""
    << kH - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
}

}  // namespace

std::string render(const LineChart& c) {
  double xlo = std::numeric_limits<double>::max(), xhi = std::numeric_limits<double>::lowest();
  double ylo = xlo, yhi = xhi;
  for (const auto& s : c.series) {
    for (auto [x, y] : s.points) {
      xlo = std::min(xlo, x), xhi = std::max(xhi, x);
      ylo = std::min(ylo, y), yhi = std::max(yhi, y);
    }
  }
  if (xlo > xhi) xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  const Axis ax = make_axis(xlo, xhi, c.log_x);
  const Axis ay = make_axis(ylo, yhi, c.log_y);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;

  std::ostringstream o;
  frame(o, c.title, c.x_label, c.y_label);
  for (double t : ax.ticks()) {
    const double px = ax.map(t, x0, x1);
    o << "<line x1=\"" << px << "\" y1=\"" << y0 << "\" x2=\"" << px << "\" y2=\"" << y1
      << "\" stroke=\"#ddd\"/><text x=\"" << px << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << fmt(t)
      << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double py = ay.map(t, y0, y1);
    o << "<line x1=\"" << x0 << "\" y1=\"" << py << "\" x2=\"" << x1 << "\" y2=\"" << py
      << "\" stroke=\"#ddd\"/><text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << fmt(t)
      << "</text>\n";
  }
  for (std::size_t i = 0; i < c.series.size(); ++i) {
    const auto& s = c.series[i];
    const char* col = kColors[i % std::size(kColors)];
    auto pts = s.points;
    std::sort(pts.begin(), pts.end());
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) o << ax.map(x, x0, x1) << "," << ay.map(y, y0, y1) << " ";
    o << "\"/>\n";
    for (auto [x, y] : pts)
      o << "<circle cx=\"" << ax.map(x, x0, x1) << "\" cy=\"" << ay.map(y, y0, y1) << "\" r=\"3\" fill=\"" << col
        << "\"/>\n";
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << x1 + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << x1 + 32 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << col << "\" stroke-width=\"2\"/><text x=\"" << x1 + 38 << "\" y=\"" << ly << "\">"
      << esc(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string render(const StackedBars& c) {
  double hi = 0;
  for (const auto& row : c.values) {
    double sum = 0;
    for (double v : row) sum += v;
    hi = std::max(hi, sum);
  }
  const Axis ay = make_axis(0, hi > 0 ? hi : 1, false);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  std::ostringstream o;
  frame(o, c.title, "", c.y_label);
  for (double t : ay.ticks()) {
    const double py = ay.map(t, y0, y1);
    o << "<line x1=\"" << x0 << "\" y1=\"" << py << "\" x2=\"" << x1 << "\" y2=\"" << py
      << "\" stroke=\"#ddd\"/><text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << fmt(t)
      << "</text>\n";
  }
  const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(c.categories.size(), 1));
  for (std::size_t i = 0; i < c.categories.size(); ++i) {
    const double bx = x0 + slot * (static_cast<double>(i) + 0.2);
    double base = 0;
    for (std::size_t l = 0; l < c.layers.size() && l < c.values[i].size(); ++l) {
      const double v = c.values[i][l];
      const double top = ay.map(base + v, y0, y1), bottom = ay.map(base, y0, y1);
      o << "<rect x=\"" << bx << "\" y=\"" << top << "\" width=\"" << slot * 0.6 << "\" height=\"" << bottom - top
        << "\" fill=\"" << kColors[l % std::size(kColors)] << "\"/>\n";
      base += v;
    }
    o << "<text x=\"" << bx + slot * 0.3 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
      << esc(c.categories[i]) << "</text>\n";
  }
  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    const double ly = kTop + 14 + 18.0 * static_cast<double>(l);
    o << "<rect x=\"" << x1 + 12 << "\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
      << kColors[l % std::size(kColors)] << "\"/><text x=\"" << x1 + 30 << "\" y=\"" << ly << "\">"
      << esc(c.layers[l]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path);
  out << svg;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace isf::svg
