#pragma once

#include <string>
#include <vector>

#include "fisherlens/harness/config.hpp"
#include "fisherlens/harness/metrics.hpp"

namespace fisherlens::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::string y_label;
  bool log10 = false;  // values <= 0 are clamped to kProbEpsilon and marked
  std::vector<Series> series;
};

/// Self-contained SVG: one <polyline> per series, axes with ticks, a legend
/// per panel and a footnote when any log-scale value was clamped.
std::string render_svg(const std::string& title, const std::vector<Panel>& panels);

/// Builds the panels for a plot kind from already-parsed metric tables.
std::vector<Panel> build_panels(PlotConfig::Kind kind, const std::vector<CsvTable>& tables,
                                const std::vector<std::string>& labels);

const char* to_string(PlotConfig::Kind kind) noexcept;

}  // namespace fisherlens::harness
