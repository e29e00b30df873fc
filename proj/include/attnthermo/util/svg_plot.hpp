#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace thermo::util {

// Small static-SVG plotting layer: enough for line plots (optional second y
// axis, log scales, vertical markers, error bars) and a scalar-field
// heatmap. No external dependencies; output is deterministic.

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool second_axis = false;     // scale against the right-hand y axis
  bool markers = false;         // draw point markers as well
};

struct ErrorBar {
  double x, y_low, y_high;
};

struct LinePlotSpec {
  std::string title, xlabel, ylabel, y2label;
  std::vector<Series> series;
  std::vector<ErrorBar> error_bars;  // drawn against the primary axis
  std::vector<double> vlines;
  bool log_x = false;
  bool log_y = false;
  int width = 860, height = 480;
};

void write_line_plot(const std::filesystem::path& path,
                     const LinePlotSpec& spec);

struct HeatmapSpec {
  std::string title, xlabel, ylabel;
  std::vector<double> values;  // row-major [ny][nx]
  int nx = 0, ny = 0;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  std::vector<std::array<double, 2>> overlay_circle;  // optional ring points
  int width = 640, height = 640;
};

void write_heatmap(const std::filesystem::path& path, const HeatmapSpec& spec);

}  // namespace thermo::util
