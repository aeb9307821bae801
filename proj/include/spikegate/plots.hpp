#pragma once

// Static SVG charts. Output depends only on the data (fixed layout, fixed
// number formatting, no timestamps).

#include <filesystem>
#include <string>
#include <vector>

#include "spikegate/train.hpp"

namespace spikegate {

struct Series {
  std::string name;
  std::vector<double> values;
};

inline constexpr double kPlotHeight = 200.0;
inline constexpr double kPlotWidth = 400.0;

/// One polyline per series over the index axis. Throws std::invalid_argument
/// when there is no series or a series is empty or non-finite.
std::string line_chart_svg(const std::string& title, const std::vector<Series>& series);

/// Bars of height value / max(values) * kPlotHeight. Values must be finite
/// and non-negative.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

/// Writes loss.svg and metric.svg for the given logs; returns the paths.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::pair<std::string, MetricsLog>>& logs,
                                              const std::filesystem::path& dir);

}  // namespace spikegate
