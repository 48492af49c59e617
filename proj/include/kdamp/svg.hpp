#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

namespace kdamp {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
  bool markers = false;
};

struct Plot {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
  std::vector<PlotSeries> series;
};

// Static line chart. Output depends only on the data, so it is reproducible byte for byte.
inline std::string render_svg(const Plot& p) {
  const double W = 640, H = 420, L = 70, R = 160, T = 40, B = 55;
  auto tx = [&](double v) { return p.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return p.logy ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series)
    for (size_t j = 0; j < s.x.size(); ++j) {
      if ((p.logx && !(s.x[j] > 0)) || (p.logy && !(s.y[j] > 0))) continue;
      x0 = std::min(x0, tx(s.x[j]));
      x1 = std::max(x1, tx(s.x[j]));
      y0 = std::min(y0, ty(s.y[j]));
      y1 = std::max(y1, ty(s.y[j]));
    }
  if (!(x1 >= x0) || !(y1 >= y0)) throw std::invalid_argument("plot has no drawable points");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", (W - R + L) / 2,
                   p.title);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", L, T,
                   W - L - R, H - T - B);
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4, fy = y0 + (y1 - y0) * i / 4;
    const double vx = p.logx ? std::pow(10.0, fx) : fx, vy = p.logy ? std::pow(10.0, fy) : fy;
    const double X = L + (W - L - R) * i / 4.0, Y = H - B - (H - T - B) * i / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", X, H - B + 16, vx);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", L - 6, Y + 4, vy);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (W - R + L) / 2, H - 12, p.xlabel);
  s += fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
                   (H - B + T) / 2, (H - B + T) / 2, p.ylabel);
  for (size_t k = 0; k < p.series.size(); ++k) {
    const auto& sr = p.series[k];
    const char* c = colors[k % 6];
    std::string pts;
    for (size_t j = 0; j < sr.x.size(); ++j) {
      if ((p.logx && !(sr.x[j] > 0)) || (p.logy && !(sr.y[j] > 0))) continue;
      pts += fmt::format("{:.2f},{:.2f} ", px(sr.x[j]), py(sr.y[j]));
      if (sr.markers)
        s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(sr.x[j]), py(sr.y[j]), c);
    }
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", c, pts);
    const double ly = T + 14 + 18 * k;
    s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n", W - R + 10, ly,
                     W - R + 30, ly, c);
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", W - R + 36, ly + 4, sr.label);
  }
  s += "</svg>\n";
  return s;
}

inline void write_svg(const Plot& p, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << render_svg(p);
}

}  // namespace kdamp
