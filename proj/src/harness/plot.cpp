#include "fisherlens/harness/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"

namespace fisherlens::harness {

namespace {

constexpr double kPanelW = 640, kPanelH = 300;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};
constexpr const char* kClampMarker = "†";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 0.5);
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

const char* to_string(PlotConfig::Kind kind) noexcept {
  switch (kind) {
    case PlotConfig::Kind::AccCcklLoss: return "acc_cckl_loss";
    case PlotConfig::Kind::FisherTrajectory: return "fisher_trajectory";
    case PlotConfig::Kind::NatVsAdvOverlay: return "nat_vs_adv_overlay";
  }
  return "unknown";
}

std::string render_svg(const std::string& title, const std::vector<Panel>& panels) {
  require(!panels.empty(), ErrorKind::Contract, "plot: no panels");
  bool any_clamped = false;
  std::string body;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Panel& panel = panels[p];
    const double oy = 30 + static_cast<double>(p) * kPanelH;
    const double x0 = kLeft, x1 = kPanelW - kRight;
    const double y0 = oy + kTop, y1 = oy + kPanelH - kBottom;

    // Transformed values and clamp flags.
    std::vector<std::vector<double>> ys(panel.series.size());
    std::vector<std::vector<bool>> clamped(panel.series.size());
    Range xr, yr;
    for (std::size_t s = 0; s < panel.series.size(); ++s) {
      const Series& ser = panel.series[s];
      require(ser.x.size() == ser.y.size(), ErrorKind::Dimension, "plot: series x/y length mismatch");
      for (std::size_t i = 0; i < ser.y.size(); ++i) {
        double v = ser.y[i];
        bool c = false;
        if (panel.log10) {
          if (!(v > kProbEpsilon)) {
            v = kProbEpsilon;
            c = true;
          }
          v = std::log10(v);
        }
        ys[s].push_back(v);
        clamped[s].push_back(c);
        xr.add(ser.x[i]);
        yr.add(v);
      }
    }
    xr.settle();
    yr.settle();
    auto px = [&](double x) { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
    auto py = [&](double y) { return y1 - (y - yr.lo) / (yr.hi - yr.lo) * (y1 - y0); };

    body += "<g class=\"panel\">\n";
    body += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(oy + 24) +
            "\" text-anchor=\"middle\" font-size=\"14\">" + escape(panel.title) + "</text>\n";
    body += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x1) + "\" y2=\"" +
            num(y1) + "\" stroke=\"black\"/>\n";
    body += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" +
            num(y1) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
      const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
      body += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(y1 + 16) +
              "\" text-anchor=\"middle\" font-size=\"10\">" + num(fx) + "</text>\n";
      body += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(py(fy) + 3) +
              "\" text-anchor=\"end\" font-size=\"10\">" + num(fy) + "</text>\n";
    }
    body += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(y1 + 34) +
            "\" text-anchor=\"middle\" font-size=\"11\">epoch</text>\n";
    const std::string ylab = panel.log10 ? "log10(" + panel.y_label + ")" : panel.y_label;
    body += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" font-size=\"11\" transform=\"rotate(-90 16 " +
            num((y0 + y1) / 2) + ")\" text-anchor=\"middle\">" + escape(ylab) + "</text>\n";

    for (std::size_t s = 0; s < panel.series.size(); ++s) {
      const char* color = kPalette[s % std::size(kPalette)];
      std::string pts;
      for (std::size_t i = 0; i < ys[s].size(); ++i) {
        if (!std::isfinite(ys[s][i])) continue;
        if (!pts.empty()) pts += ' ';
        pts += num(px(panel.series[s].x[i])) + "," + num(py(ys[s][i]));
      }
      body += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
              "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
      for (std::size_t i = 0; i < ys[s].size(); ++i) {
        if (!clamped[s][i]) continue;
        any_clamped = true;
        body += "<text class=\"clamp-marker\" x=\"" + num(px(panel.series[s].x[i])) + "\" y=\"" +
                num(py(ys[s][i]) - 4) + "\" font-size=\"10\" fill=\"" + color + "\">" +
                kClampMarker + "</text>\n";
      }
      const double ly = y0 + 14.0 * static_cast<double>(s);
      body += "<g class=\"legend-entry\"><rect x=\"" + num(x1 + 12) + "\" y=\"" + num(ly) +
              "\" width=\"12\" height=\"3\" fill=\"" + color + "\"/><text x=\"" + num(x1 + 28) +
              "\" y=\"" + num(ly + 5) + "\" font-size=\"10\">" + escape(panel.series[s].label) +
              "</text></g>\n";
    }
    body += "</g>\n";
  }

  const double height = 30 + kPanelH * static_cast<double>(panels.size()) + (any_clamped ? 24 : 0);
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kPanelW) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(kPanelW) + " " + num(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(kPanelW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"16\">" +
         escape(title) + "</text>\n";
  svg += body;
  if (any_clamped)
    svg += "<text class=\"footnote\" x=\"10\" y=\"" + num(height - 8) + "\" font-size=\"10\">" +
           std::string(kClampMarker) + " value <= 0 clamped to " + num(kProbEpsilon) +
           " before log10</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::vector<Panel> build_panels(PlotConfig::Kind kind, const std::vector<CsvTable>& tables,
                                const std::vector<std::string>& labels) {
  require(tables.size() == labels.size(), ErrorKind::Contract, "plot: one label per table");
  struct Metric {
    const char* column;
    const char* title;
    bool log;
  };
  std::vector<Metric> metrics;
  switch (kind) {
    case PlotConfig::Kind::AccCcklLoss:
      metrics = {{"test_acc", "test accuracy", false},
                 {"test_cckl_sym", "test CCKL (nats)", false},
                 {"train_loss", "training loss", false}};
      break;
    case PlotConfig::Kind::FisherTrajectory:
      metrics = {{"test_acc", "test accuracy", false},
                 {"avg_fisher_fro", "avg Fisher F-norm", true}};
      break;
    case PlotConfig::Kind::NatVsAdvOverlay:
      metrics = {{"avg_fisher_fro", "avg Fisher F-norm", true},
                 {"test_acc", "test accuracy", false}};
      break;
  }
  std::vector<Panel> panels;
  for (const auto& m : metrics) {
    Panel panel{m.title, m.column, m.log, {}};
    for (std::size_t t = 0; t < tables.size(); ++t) {
      const auto y = tables[t].column(m.column);
      const auto x = tables[t].column("epoch");
      const std::string label = tables.size() > 1 ? labels[t] + ": " + m.title : m.title;
      panel.series.push_back({label, x, y});
    }
    panels.push_back(std::move(panel));
  }
  return panels;
}

}  // namespace fisherlens::harness
