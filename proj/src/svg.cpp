#include "dft/util/svg.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dft/util/io.hpp"

namespace dft::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 24, kTop = 40, kBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
constexpr int kPaletteSize = 7;

struct Range {
  double lo = 0.0, hi = 1.0;
  void widen(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

Range fit(const std::vector<double>& vs) {
  if (vs.empty()) return {};
  Range r{vs[0], vs[0]};
  for (double v : vs) r.widen(v);
  if (r.hi == r.lo) {
    r.lo -= 0.5;
    r.hi += 0.5;
  }
  return r;
}

std::string header(const std::string& title) {
  std::string s = strprintf(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
      "viewBox=\"0 0 %g %g\" font-family=\"monospace\" font-size=\"12\">\n",
      kWidth, kHeight, kWidth, kHeight);
  s += strprintf("<rect width=\"%g\" height=\"%g\" fill=\"white\"/>\n", kWidth, kHeight);
  s += strprintf("<text x=\"%g\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">%s</text>\n", kWidth / 2,
                 title.c_str());
  return s;
}

std::string axes(const Range& xr, const Range& yr, const std::string& x_label, const std::string& y_label) {
  std::string s;
  s += strprintf("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", kLeft,
                 kHeight - kBottom, kWidth - kRight, kHeight - kBottom);
  s += strprintf("<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", kLeft, kTop, kLeft,
                 kHeight - kBottom);
  for (int i = 0; i <= 4; ++i) {
    const double fx = i / 4.0;
    const double xv = xr.lo + fx * (xr.hi - xr.lo);
    const double px = kLeft + fx * (kWidth - kLeft - kRight);
    s += strprintf("<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.4g</text>\n", px,
                   kHeight - kBottom + 16, xv);
    const double yv = yr.lo + fx * (yr.hi - yr.lo);
    const double py = kHeight - kBottom - fx * (kHeight - kTop - kBottom);
    s += strprintf("<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.4g</text>\n", kLeft - 6, py + 4, yv);
  }
  s += strprintf("<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%s</text>\n",
                 kLeft + (kWidth - kLeft - kRight) / 2, kHeight - 8, x_label.c_str());
  s += strprintf(
      "<text x=\"16\" y=\"%g\" text-anchor=\"middle\" transform=\"rotate(-90 16 %g)\">%s</text>\n",
      kTop + (kHeight - kTop - kBottom) / 2, kTop + (kHeight - kTop - kBottom) / 2, y_label.c_str());
  return s;
}

double px(double v, const Range& r) { return kLeft + (v - r.lo) / (r.hi - r.lo) * (kWidth - kLeft - kRight); }
double py(double v, const Range& r) {
  return kHeight - kBottom - (v - r.lo) / (r.hi - r.lo) * (kHeight - kTop - kBottom);
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  Range xr, yr;
  bool first = true;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (first) {
        xr = {s.xs[i], s.xs[i]};
        yr = {s.ys[i], s.ys[i]};
        first = false;
      }
      xr.widen(s.xs[i]);
      yr.widen(s.ys[i]);
    }
  if (xr.hi == xr.lo) xr.hi = xr.lo + 1;
  if (yr.hi == yr.lo) yr.hi = yr.lo + 1;

  std::string out = header(title);
  out += axes(xr, yr, x_label, y_label);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % kPaletteSize];
    std::string pts;
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      pts += strprintf("%.2f,%.2f ", px(s.xs[i], xr), py(s.ys[i], yr));
    out += strprintf("<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                     pts.c_str(), color);
    for (std::size_t i = 0; i < s.xs.size(); ++i)
      out += strprintf("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\"/>\n", px(s.xs[i], xr),
                       py(s.ys[i], yr), color);
    out += strprintf("<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", kWidth - kRight - 150,
                     kTop + 14.0 * (si + 1), color, s.label.c_str());
  }
  out += "</svg>\n";
  return out;
}

std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<Series>& series, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& reference_lines) {
  Range yr{0.0, 0.0};
  for (const Series& s : series)
    for (double v : s.ys) yr.widen(v);
  for (const auto& [label, v] : reference_lines) yr.widen(v);
  if (yr.hi == yr.lo) yr.hi = yr.lo + 1;
  yr.hi *= 1.05;

  std::string out = header(title);
  out += axes({0.0, static_cast<double>(categories.size())}, yr, "", y_label);
  const double plot_w = kWidth - kLeft - kRight;
  const double group_w = plot_w / std::max<std::size_t>(1, categories.size());
  const double bar_w = group_w / (series.size() + 1);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    out += strprintf("<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%s</text>\n",
                     kLeft + group_w * (c + 0.5), kHeight - kBottom + 16, categories[c].c_str());
    for (std::size_t si = 0; si < series.size(); ++si) {
      if (c >= series[si].ys.size()) continue;
      const double v = series[si].ys[c];
      const double x0 = kLeft + group_w * c + bar_w * (si + 0.5);
      const double y0 = py(v, yr);
      out += strprintf("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\"/>\n", x0, y0,
                       bar_w, kHeight - kBottom - y0, kPalette[si % kPaletteSize]);
    }
  }
  for (std::size_t si = 0; si < series.size(); ++si)
    out += strprintf("<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", kWidth - kRight - 150,
                     kTop + 14.0 * (si + 1), kPalette[si % kPaletteSize], series[si].label.c_str());
  for (std::size_t ri = 0; ri < reference_lines.size(); ++ri) {
    const auto& [label, v] = reference_lines[ri];
    const double y0 = py(v, yr);
    out += strprintf(
        "<line x1=\"%g\" y1=\"%.2f\" x2=\"%g\" y2=\"%.2f\" stroke=\"#555555\" stroke-dasharray=\"6,3\"/>\n",
        kLeft, y0, kWidth - kRight, y0);
    out += strprintf("<text x=\"%g\" y=\"%.2f\" fill=\"#555555\">%s</text>\n", kLeft + 4, y0 - 4,
                     label.c_str());
  }
  out += "</svg>\n";
  return out;
}

std::string scatter_chart(const std::string& title, const std::vector<ScatterPoint>& points) {
  Range xr, yr;
  bool first = true;
  for (const ScatterPoint& p : points) {
    if (first) {
      xr = {p.x, p.x};
      yr = {p.y, p.y};
      first = false;
    }
    xr.widen(p.x);
    yr.widen(p.y);
  }
  if (xr.hi == xr.lo) xr.hi = xr.lo + 1;
  if (yr.hi == yr.lo) yr.hi = yr.lo + 1;

  std::map<std::string, const char*> colors;
  for (const ScatterPoint& p : points)
    if (!colors.count(p.label)) colors[p.label] = kPalette[colors.size() % kPaletteSize];

  std::string out = header(title);
  out += axes(xr, yr, "pc1", "pc2");
  for (const ScatterPoint& p : points)
    out += strprintf("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                     px(p.x, xr), py(p.y, yr), colors[p.label]);
  int li = 0;
  for (const auto& [label, color] : colors)
    out += strprintf("<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", kWidth - kRight - 120,
                     kTop + 14.0 * (++li), color, label.c_str());
  out += "</svg>\n";
  return out;
}

}  // namespace dft::svg
