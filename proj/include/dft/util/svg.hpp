#pragma once

#include <string>
#include <vector>

namespace dft::svg {

struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Line chart with axes and tick labels; deterministic output.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

/// Grouped bar chart; one group per x category, one bar per series. An
/// optional horizontal reference line marks a baseline value.
std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<Series>& series, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& reference_lines = {});

/// Scatter with one color per label class.
struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};
std::string scatter_chart(const std::string& title, const std::vector<ScatterPoint>& points);

}  // namespace dft::svg
