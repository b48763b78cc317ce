#include "crl/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace crl {
namespace svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<Series>& series) {
  constexpr double w = 860, h = 480;
  constexpr double ml = 70, mr = 160, mt = 40, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;

  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool any = false;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        any = true;
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (x_max - x_min < 1e-12) x_max = x_min + 1;
  if (y_max - y_min < 1e-12) y_max = y_min + 1;
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
    << "' viewBox='0 0 " << w << ' ' << h << "'>\n"
    << "<rect width='100%' height='100%' fill='white'/>\n"
    << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-family='sans-serif' "
       "font-size='15'>"
    << title << "</text>\n";

  // axes and ticks
  f << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
    << "' stroke='black'/>\n"
    << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
    << "' stroke='black'/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double fx = x_min + (x_max - x_min) * t / 5.0;
    const double fy = y_min + (y_max - y_min) * t / 5.0;
    f << "<line x1='" << px(fx) << "' y1='" << mt + ph << "' x2='" << px(fx) << "' y2='"
      << mt + ph + 5 << "' stroke='black'/>\n"
      << "<text x='" << px(fx) << "' y='" << mt + ph + 20
      << "' text-anchor='middle' font-family='sans-serif' font-size='11'>" << num(fx)
      << "</text>\n"
      << "<line x1='" << ml - 5 << "' y1='" << py(fy) << "' x2='" << ml << "' y2='" << py(fy)
      << "' stroke='black'/>\n"
      << "<text x='" << ml - 8 << "' y='" << py(fy) + 4
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << num(fy) << "</text>\n";
  }
  f << "<text x='" << ml + pw / 2 << "' y='" << h - 12
    << "' text-anchor='middle' font-family='sans-serif' font-size='12'>" << x_label
    << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string points;
    bool open = false;
    auto flush = [&]() {
      if (open && !points.empty()) {
        f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='" << points
          << "'/>\n";
      }
      points.clear();
      open = false;
    };
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].x[i]) || !std::isfinite(series[s].y[i])) {
        flush();
        continue;
      }
      points += num(px(series[s].x[i])) + "," + num(py(series[s].y[i])) + " ";
      open = true;
    }
    flush();
    const double ly = mt + 16.0 * static_cast<double>(s);
    f << "<line x1='" << ml + pw + 10 << "' y1='" << ly << "' x2='" << ml + pw + 30 << "' y2='"
      << ly << "' stroke='" << color << "' stroke-width='2'/>\n"
      << "<text x='" << ml + pw + 35 << "' y='" << ly + 4
      << "' font-family='sans-serif' font-size='11'>" << series[s].name << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace svg
}  // namespace crl
