#include "spikegate/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "spikegate/errors.hpp"

namespace spikegate {
namespace {

constexpr double kMargin = 40.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

std::string header(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kPlotWidth + 2 * kMargin) << "\" height=\""
    << num(kPlotHeight + 2 * kMargin) << "\">\n"
    << "<text x=\"" << num(kMargin) << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n"
    << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(kMargin + kPlotHeight) << "\" x2=\""
    << num(kMargin + kPlotWidth) << "\" y2=\"" << num(kMargin + kPlotHeight) << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(kMargin) << "\" x2=\"" << num(kMargin) << "\" y2=\""
    << num(kMargin + kPlotHeight) << "\" stroke=\"black\"/>\n";
  return o.str();
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("line chart needs at least one series");
  double lo = INFINITY, hi = -INFINITY;
  std::size_t longest = 0;
  for (const auto& s : series) {
    if (s.values.empty()) throw std::invalid_argument("line chart series '" + s.name + "' is empty");
    for (double v : s.values) {
      if (!std::isfinite(v)) throw std::invalid_argument("line chart series '" + s.name + "' is not finite");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    longest = std::max(longest, s.values.size());
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const double step = longest > 1 ? kPlotWidth / static_cast<double>(longest - 1) : 0.0;
  std::ostringstream o;
  o << header(title);
  o << "<text x=\"2\" y=\"" << num(kMargin) << "\" font-size=\"10\">" << num(hi) << "</text>\n"
    << "<text x=\"2\" y=\"" << num(kMargin + kPlotHeight) << "\" font-size=\"10\">" << num(lo) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    o << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 6] << "\" data-name=\"" << escape(s.name)
      << "\" points=\"";
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      if (j) o << ' ';
      o << num(kMargin + step * static_cast<double>(j)) << ','
        << num(kMargin + kPlotHeight - (s.values[j] - lo) / span * kPlotHeight);
    }
    o << "\"/>\n";
    o << "<text x=\"" << num(kMargin + kPlotWidth - 80) << "\" y=\"" << num(kMargin + 14.0 * static_cast<double>(i))
      << "\" font-size=\"10\" fill=\"" << kPalette[i % 6] << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("bar chart needs at least one value");
  if (labels.size() != values.size()) throw std::invalid_argument("bar chart needs one label per value");
  double hi = 0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0) throw std::invalid_argument("bar chart values must be finite and >= 0");
    hi = std::max(hi, v);
  }
  const double scale = hi > 0 ? kPlotHeight / hi : 0.0;
  const double slot = kPlotWidth / static_cast<double>(values.size());
  std::ostringstream o;
  o << header(title);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = values[i] * scale;
    const double x = kMargin + slot * static_cast<double>(i) + slot * 0.1;
    o << "<rect class=\"bar\" data-label=\"" << escape(labels[i]) << "\" data-value=\"" << num(values[i])
      << "\" x=\"" << num(x) << "\" y=\"" << num(kMargin + kPlotHeight - h) << "\" width=\"" << num(slot * 0.8)
      << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[0] << "\"/>\n";
    o << "<text x=\"" << num(x) << "\" y=\"" << num(kMargin + kPlotHeight + 14) << "\" font-size=\"9\">"
      << escape(labels[i]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_plots(const std::vector<std::pair<std::string, MetricsLog>>& logs,
                                              const std::filesystem::path& dir) {
  if (logs.empty()) throw std::invalid_argument("emit_plots needs at least one log");
  std::vector<Series> loss, metric;
  for (const auto& [name, log] : logs) {
    Series l{name, {}}, m{name, {}};
    for (const auto& e : log.entries()) {
      l.values.push_back(e.loss);
      m.values.push_back(e.metric);
    }
    loss.push_back(std::move(l));
    metric.push_back(std::move(m));
  }
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (const auto& [file, svg] : {std::pair{"loss.svg", line_chart_svg("loss", loss)},
                                  std::pair{"metric.svg", line_chart_svg("metric", metric)}}) {
    const auto path = dir / file;
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path.string());
    f << svg;
    out.push_back(path);
  }
  return out;
}

}  // namespace spikegate
