// Copyright 2026 The lpstomo developers.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpstomo {

// One curve of a scatter/line chart.
struct PlotSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  bool line = true;
  bool markers = true;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 440;
};

namespace detail {

inline std::string fmt_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string fmt_px(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % (sizeof palette / sizeof palette[0])];
}

// Tick positions at multiples of 1, 2 or 5 times a power of ten.
inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (const double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mult * mag >= raw) {
      step = mult * mag;
      break;
    }
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 0.5 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double to_unit(double v) const {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return (a - l) / (h - l);
  }

  std::vector<double> ticks() const {
    if (!log) return nice_ticks(lo, hi);
    std::vector<double> out;
    const int klo = static_cast<int>(std::floor(std::log10(lo) - 1e-9));
    const int khi = static_cast<int>(std::ceil(std::log10(hi) + 1e-9));
    for (int k = klo; k <= khi; ++k) {
      const double t = std::pow(10.0, k);
      if (t >= lo * (1 - 1e-9) && t <= hi * (1 + 1e-9)) out.push_back(t);
    }
    if (out.size() < 2) return {lo, hi};
    return out;
  }
};

inline Axis fit_axis(std::vector<double> values, bool log) {
  if (log) {
    std::erase_if(values, [](double v) { return !(v > 0.0); });
  }
  if (values.empty()) throw std::invalid_argument("plot: empty axis data");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  Axis ax;
  ax.log = log;
  if (log) {
    ax.lo = *mn / 1.5;
    ax.hi = *mx * 1.5;
  } else {
    const double span = *mx - *mn;
    const double pad = span > 0 ? 0.08 * span : std::max(0.5, std::abs(*mn));
    ax.lo = *mn - pad;
    ax.hi = *mx + pad;
  }
  return ax;
}

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

// Writes a self-contained SVG scatter/line chart. Output bytes depend only
// on the inputs, so identical data produces identical files.
inline void write_line_plot(const std::filesystem::path& path,
                            const std::vector<PlotSeries>& series,
                            const PlotOptions& opt = {}) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  std::vector<double> all_x, all_y;
  for (const PlotSeries& s : series) {
    if (s.xs.size() != s.ys.size()) {
      throw std::invalid_argument("plot: series '" + s.label +
                                  "' has mismatched x/y lengths");
    }
    all_x.insert(all_x.end(), s.xs.begin(), s.xs.end());
    all_y.insert(all_y.end(), s.ys.begin(), s.ys.end());
  }
  const detail::Axis ax = detail::fit_axis(all_x, opt.log_x);
  const detail::Axis ay = detail::fit_axis(all_y, opt.log_y);

  const double ml = 62, mr = 16, mt = 34, mb = 46;  // margins
  const double pw = opt.width - ml - mr;
  const double ph = opt.height - mt - mb;
  auto px = [&](double v) { return ml + ax.to_unit(v) * pw; };
  auto py = [&](double v) { return mt + (1.0 - ay.to_unit(v)) * ph; };

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width
      << "\" height=\"" << opt.height << "\" viewBox=\"0 0 " << opt.width
      << " " << opt.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Grid and tick labels.
  for (const double t : ax.ticks()) {
    const std::string x = detail::fmt_px(px(t));
    out << "<line x1=\"" << x << "\" y1=\"" << detail::fmt_px(mt) << "\" x2=\""
        << x << "\" y2=\"" << detail::fmt_px(mt + ph)
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << detail::fmt_px(mt + ph + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\" "
           "font-family=\"sans-serif\">"
        << detail::fmt_num(t) << "</text>\n";
  }
  for (const double t : ay.ticks()) {
    const std::string y = detail::fmt_px(py(t));
    out << "<line x1=\"" << detail::fmt_px(ml) << "\" y1=\"" << y << "\" x2=\""
        << detail::fmt_px(ml + pw) << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << detail::fmt_px(ml - 6) << "\" y=\"" << y
        << "\" font-size=\"11\" text-anchor=\"end\" dominant-baseline=\"middle\" "
           "fill=\"#333333\" font-family=\"sans-serif\">"
        << detail::fmt_num(t) << "</text>\n";
  }
  // Frame.
  out << "<rect x=\"" << detail::fmt_px(ml) << "\" y=\"" << detail::fmt_px(mt)
      << "\" width=\"" << detail::fmt_px(pw) << "\" height=\""
      << detail::fmt_px(ph) << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  // Data.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& s = series[i];
    const char* color = detail::series_color(i);
    if (s.line && s.xs.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < s.xs.size(); ++k) {
        if ((opt.log_x && !(s.xs[k] > 0)) || (opt.log_y && !(s.ys[k] > 0))) {
          continue;
        }
        out << detail::fmt_px(px(s.xs[k])) << ',' << detail::fmt_px(py(s.ys[k]))
            << ' ';
      }
      out << "\"/>\n";
    }
    if (s.markers) {
      for (std::size_t k = 0; k < s.xs.size(); ++k) {
        if ((opt.log_x && !(s.xs[k] > 0)) || (opt.log_y && !(s.ys[k] > 0))) {
          continue;
        }
        out << "<circle cx=\"" << detail::fmt_px(px(s.xs[k])) << "\" cy=\""
            << detail::fmt_px(py(s.ys[k])) << "\" r=\"3\" fill=\"" << color
            << "\"/>\n";
      }
    }
  }

  // Legend (top-right inside the frame).
  double ly = mt + 14;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].label.empty()) continue;
    const double lx = ml + pw - 8;
    out << "<circle cx=\"" << detail::fmt_px(lx - 4) << "\" cy=\""
        << detail::fmt_px(ly - 4) << "\" r=\"4\" fill=\""
        << detail::series_color(i) << "\"/>\n"
        << "<text x=\"" << detail::fmt_px(lx - 12) << "\" y=\""
        << detail::fmt_px(ly) << "\" font-size=\"11\" text-anchor=\"end\" "
           "fill=\"#333333\" font-family=\"sans-serif\">"
        << detail::xml_escape(series[i].label) << "</text>\n";
    ly += 15;
  }

  // Title and axis labels.
  out << "<text x=\"" << detail::fmt_px(ml + pw / 2) << "\" y=\"20\" "
         "font-size=\"13\" text-anchor=\"middle\" fill=\"#111111\" "
         "font-family=\"sans-serif\">"
      << detail::xml_escape(opt.title) << "</text>\n"
      << "<text x=\"" << detail::fmt_px(ml + pw / 2) << "\" y=\""
      << detail::fmt_px(opt.height - 10)
      << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111111\" "
         "font-family=\"sans-serif\">"
      << detail::xml_escape(opt.x_label) << "</text>\n"
      << "<text x=\"14\" y=\"" << detail::fmt_px(mt + ph / 2)
      << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111111\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 14 "
      << detail::fmt_px(mt + ph / 2) << ")\">" << detail::xml_escape(opt.y_label)
      << "</text>\n</svg>\n";
}

// Writes a rectangular heat map with per-cell shading (white = 0 up to a
// dark blue at the maximum value) and row/column labels.
inline void write_heatmap(const std::filesystem::path& path,
                          const std::vector<std::vector<double>>& values,
                          const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels,
                          const std::string& title) {
  if (values.empty() || values.front().empty()) {
    throw std::invalid_argument("heatmap: empty value grid");
  }
  const std::size_t rows = values.size();
  const std::size_t cols = values.front().size();
  if (row_labels.size() != rows || col_labels.size() != cols) {
    throw std::invalid_argument("heatmap: label count mismatch");
  }
  double vmax = 0.0;
  for (const auto& row : values) {
    if (row.size() != cols) {
      throw std::invalid_argument("heatmap: ragged value grid");
    }
    for (const double v : row) vmax = std::max(vmax, v);
  }
  if (vmax <= 0.0) vmax = 1.0;

  const double cell = 44, ml = 64, mt = 40, mb = 40;
  const double w = ml + cols * cell + 16;
  const double h = mt + rows * cell + mb;

  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << detail::fmt_px(ml + cols * cell / 2)
      << "\" y=\"22\" font-size=\"13\" text-anchor=\"middle\" "
         "fill=\"#111111\" font-family=\"sans-serif\">"
      << detail::xml_escape(title) << "</text>\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double t = values[r][c] / vmax;
      const int red = static_cast<int>(std::lround(255 + t * (8 - 255)));
      const int green = static_cast<int>(std::lround(255 + t * (48 - 255)));
      const int blue = static_cast<int>(std::lround(255 + t * (107 - 255)));
      const double x = ml + c * cell;
      const double y = mt + r * cell;
      out << "<rect x=\"" << detail::fmt_px(x) << "\" y=\"" << detail::fmt_px(y)
          << "\" width=\"" << detail::fmt_px(cell) << "\" height=\""
          << detail::fmt_px(cell) << "\" fill=\"rgb(" << red << ',' << green
          << ',' << blue << ")\" stroke=\"#cccccc\"/>\n";
      const char* text_color = t > 0.55 ? "#ffffff" : "#222222";
      out << "<text x=\"" << detail::fmt_px(x + cell / 2) << "\" y=\""
          << detail::fmt_px(y + cell / 2)
          << "\" font-size=\"10\" text-anchor=\"middle\" "
             "dominant-baseline=\"middle\" fill=\""
          << text_color << "\" font-family=\"sans-serif\">"
          << detail::fmt_num(values[r][c]) << "</text>\n";
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    out << "<text x=\"" << detail::fmt_px(ml - 6) << "\" y=\""
        << detail::fmt_px(mt + r * cell + cell / 2)
        << "\" font-size=\"11\" text-anchor=\"end\" "
           "dominant-baseline=\"middle\" fill=\"#333333\" "
           "font-family=\"sans-serif\">"
        << detail::xml_escape(row_labels[r]) << "</text>\n";
  }
  for (std::size_t c = 0; c < cols; ++c) {
    out << "<text x=\"" << detail::fmt_px(ml + c * cell + cell / 2) << "\" y=\""
        << detail::fmt_px(mt + rows * cell + 16)
        << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\" "
           "font-family=\"sans-serif\">"
        << detail::xml_escape(col_labels[c]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace lpstomo
