#pragma once
// Minimal static SVG charts for reports.

#include <string>
#include <utility>
#include <vector>

namespace gresynth::metrics::svg {

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Box plot per series (median, quartiles, 1.5 IQR whiskers, outliers as dots).
std::string box_plot(const std::string& title, const std::string& y_label,
                     const std::vector<Series>& series);
/// Grouped bars: one group per category, one bar per series (values[i] is category i).
std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::string>& categories, const std::vector<Series>& series);

void write(const std::string& path, const std::string& svg);

}  // namespace gresynth::metrics::svg
