#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "castelo/error.hpp"
#include "castelo/io.hpp"
#include "castelo/ranking.hpp"

namespace castelo {

namespace detail {

inline std::string svg_num(double v) { return fmt_fixed(v, 2); }

// blue (small) to red (large)
inline std::string heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  int r = static_cast<int>(std::lround(33 + (178 - 33) * v));
  int g = static_cast<int>(std::lround(102 + (24 - 102) * v));
  int b = static_cast<int>(std::lround(172 + (43 - 172) * v));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return std::string(buf);
}

inline const char* label_color(int label) {
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
                                  "#e6ab02", "#a6761d", "#386cb0", "#f0027f", "#bf5b17"};
  if (label < 0) return "#999999";
  return palette[label % 10];
}

}  // namespace detail

struct HeatStrip {
  std::string label;
  std::vector<double> values;
};

// One horizontal strip per series, every frame a colored cell; all strips
// share one color scale.
inline std::string render_heat_strips(const std::vector<HeatStrip>& strips) {
  if (strips.empty()) fail(Errc::EmptyEnsemble, "no strips to render");
  std::size_t T = strips[0].values.size();
  for (const auto& s : strips)
    if (s.values.size() != T) fail(Errc::LengthMismatch, "strip lengths differ");
  if (T == 0) fail(Errc::LengthMismatch, "empty strips");

  double lo = strips[0].values[0], hi = lo;
  for (const auto& s : strips)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  double span = hi - lo;

  const double plot_w = 800.0, strip_h = 18.0, gap = 4.0, margin_left = 120.0, margin_top = 10.0;
  double cell_w = plot_w / static_cast<double>(T);
  double height = margin_top * 2 + strips.size() * (strip_h + gap);
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + detail::svg_num(margin_left + plot_w + 10) +
         " " + detail::svg_num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t r = 0; r < strips.size(); ++r) {
    double y = margin_top + r * (strip_h + gap);
    out += "<text x=\"4\" y=\"" + detail::svg_num(y + strip_h - 5) + "\">" + strips[r].label + "</text>\n";
    out += "<g shape-rendering=\"crispEdges\">";
    for (std::size_t t = 0; t < T; ++t) {
      double v = span > 0 ? (strips[r].values[t] - lo) / span : 0.5;
      out += "<rect x=\"" + detail::svg_num(margin_left + t * cell_w) + "\" y=\"" + detail::svg_num(y) + "\" width=\"" +
             detail::svg_num(cell_w + 0.05) + "\" height=\"" + detail::svg_num(strip_h) + "\" fill=\"" +
             detail::heat_color(v) + "\"/>";
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

// Two stacked panels of per-subtype bars (cossim and avgdiff means) with
// +/- one standard deviation whiskers.
inline std::string render_metric_bars(const RankingReport& report) {
  if (report.metrics.empty()) fail(Errc::EmptyEnsemble, "empty report");
  const double panel_w = 640.0, panel_h = 160.0, margin = 40.0, gap = 40.0;
  double width = margin * 2 + panel_w;
  double height = margin * 2 + panel_h * 2 + gap;
  std::size_t n = report.metrics.size();
  double slot = panel_w / static_cast<double>(n);
  double bar_w = slot * 0.6;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + detail::svg_num(width) + " " +
         detail::svg_num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";

  auto panel = [&](double top, const char* title, auto mean_of, auto std_of) {
    double lo = 0.0, hi = 0.0;
    for (const auto& m : report.metrics) {
      lo = std::min(lo, mean_of(m) - std_of(m));
      hi = std::max(hi, mean_of(m) + std_of(m));
    }
    if (hi - lo <= 0) hi = lo + 1.0;
    auto ypix = [&](double v) { return top + panel_h - (v - lo) / (hi - lo) * panel_h; };
    out += "<text x=\"" + detail::svg_num(margin) + "\" y=\"" + detail::svg_num(top - 6) + "\">" + title + "</text>\n";
    out += "<line x1=\"" + detail::svg_num(margin) + "\" y1=\"" + detail::svg_num(ypix(0.0)) + "\" x2=\"" +
           detail::svg_num(margin + panel_w) + "\" y2=\"" + detail::svg_num(ypix(0.0)) +
           "\" stroke=\"#444\" stroke-width=\"0.5\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = report.metrics[i];
      double x = margin + i * slot + (slot - bar_w) / 2;
      double y0 = ypix(0.0), y1 = ypix(mean_of(m));
      out += "<rect x=\"" + detail::svg_num(x) + "\" y=\"" + detail::svg_num(std::min(y0, y1)) + "\" width=\"" +
             detail::svg_num(bar_w) + "\" height=\"" + detail::svg_num(std::abs(y0 - y1)) +
             "\" fill=\"#7aa6c2\"/>\n";
      double cx = x + bar_w / 2;
      out += "<line x1=\"" + detail::svg_num(cx) + "\" y1=\"" + detail::svg_num(ypix(mean_of(m) - std_of(m))) +
             "\" x2=\"" + detail::svg_num(cx) + "\" y2=\"" + detail::svg_num(ypix(mean_of(m) + std_of(m))) +
             "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
      out += "<text x=\"" + detail::svg_num(cx - 4) + "\" y=\"" + detail::svg_num(top + panel_h + 14) + "\">" +
             std::to_string(m.subtype_id) + "</text>\n";
    }
  };
  panel(margin, "cossim_mean", [](const SubtypeMetrics& m) { return m.cossim_mean; },
        [](const SubtypeMetrics& m) { return m.cossim_std; });
  panel(margin + panel_h + gap, "avgdiff_mean", [](const SubtypeMetrics& m) { return m.avgdiff_mean; },
        [](const SubtypeMetrics& m) { return m.avgdiff_std; });
  out += "</svg>\n";
  return out;
}

// Scatter of a 2D latent projection, one dot per frame colored by cluster
// label (noise gray).
inline std::string render_pca_scatter(const std::vector<double>& proj, const std::vector<int>& labels) {
  if (proj.size() != labels.size() * 2) fail(Errc::LengthMismatch, "projection and labels disagree");
  if (labels.empty()) fail(Errc::LengthMismatch, "empty projection");
  double lox = proj[0], hix = proj[0], loy = proj[1], hiy = proj[1];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    lox = std::min(lox, proj[i * 2]);
    hix = std::max(hix, proj[i * 2]);
    loy = std::min(loy, proj[i * 2 + 1]);
    hiy = std::max(hiy, proj[i * 2 + 1]);
  }
  double spanx = hix - lox > 0 ? hix - lox : 1.0;
  double spany = hiy - loy > 0 ? hiy - loy : 1.0;
  const double size = 420.0, margin = 20.0;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + detail::svg_num(size + margin * 2) + " " +
         detail::svg_num(size + margin * 2) + "\">\n";
  out += "<rect x=\"" + detail::svg_num(margin) + "\" y=\"" + detail::svg_num(margin) + "\" width=\"" +
         detail::svg_num(size) + "\" height=\"" + detail::svg_num(size) +
         "\" fill=\"none\" stroke=\"#888\" stroke-width=\"0.5\"/>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double x = margin + (proj[i * 2] - lox) / spanx * size;
    double y = margin + size - (proj[i * 2 + 1] - loy) / spany * size;
    out += "<circle cx=\"" + detail::svg_num(x) + "\" cy=\"" + detail::svg_num(y) + "\" r=\"2.5\" fill=\"" +
           detail::label_color(labels[i]) + "\" fill-opacity=\"0.7\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace castelo
