// SPDX-License-Identifier: Apache-2.0
//
// SVG line charts for metrics files: one image per metric column, one
// polyline per input run.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vspp/metrics.hpp"

namespace vspp::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<std::string> notes;  // embedded as XML comments
};

std::string render_svg(const Chart& chart, int width = 640, int height = 400);

struct PlotInput {
  std::string label;
  metrics::MetricsTable table;
};

/// Writes `<out_dir>/<metric>.svg` for every metric column shared by all
/// inputs and returns the paths. The x axis is `step` when every input has
/// it, otherwise `epoch`. SchemaMismatch when inputs disagree on schema.
std::vector<std::filesystem::path> plot_metrics(const std::vector<PlotInput>& inputs,
                                                const std::filesystem::path& out_dir);

}  // namespace vspp::plot
