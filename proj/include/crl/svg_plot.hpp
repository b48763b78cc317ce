#pragma once

#include <string>
#include <vector>

#include "crl/neural.hpp"

namespace crl {
namespace svg {

struct Series {
  std::string name;
  Vec x, y;
};

// Self-contained SVG line chart with axes, tick labels and a legend.
// Non-finite points break the polyline instead of corrupting the plot.
void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<Series>& series);

}  // namespace svg
}  // namespace crl
