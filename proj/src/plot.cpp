// SPDX-License-Identifier: Apache-2.0
#include "vspp/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "vspp/error.hpp"

namespace vspp::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// 1-2-5 tick spacing giving roughly `target` intervals.
double nice_step(double range, int target) {
  if (range <= 0) return 1;
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10 * mag;
}

}  // namespace

std::string render_svg(const Chart& chart, int width, int height) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : chart.series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x0 == x1) x1 = x0 + 1;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const double ystep = nice_step(y1 - y0, 5);
  y0 = std::floor(y0 / ystep) * ystep;
  y1 = std::ceil(y1 / ystep) * ystep;
  const double xstep = nice_step(x1 - x0, 8);

  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto sy = [&](double v) { return top + (1 - (v - y0) / (y1 - y0)) * ph; };

  std::string o;
  o += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
                   "font-size=\"12\">\n",
                   width, height);
  for (const auto& n : chart.notes) o += "<!-- " + escape(n) + " -->\n";
  o += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height);
  o += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", width / 2,
                   escape(chart.title));

  for (double v = y0; v <= y1 + ystep * 1e-9; v += ystep) {
    o += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left, sy(v),
                     left + pw, sy(v));
    o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", left - 6, sy(v) + 4, v);
  }
  for (double v = std::ceil(x0 / xstep) * xstep; v <= x1 + xstep * 1e-9; v += xstep)
    o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n", sx(v), top + ph + 16, v);
  o += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left, top,
                   pw, ph);
  o += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2, height - 12,
                   escape(chart.x_label));
  o += fmt::format("<text transform=\"translate(16 {:.1f}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n",
                   top + ph / 2, escape(chart.y_label));

  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& s = chart.series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    std::string points;
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k)
      if (std::isfinite(s.y[k])) points += fmt::format("{:.2f},{:.2f} ", sx(s.x[k]), sy(s.y[k]));
    o += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n", colour, points);
    const double ly = top + 14 + 16 * static_cast<double>(i);
    o += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"3\"/>\n",
                     left + pw - 150, ly - 4, left + pw - 130, ly - 4, colour);
    o += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", left + pw - 125, ly, escape(s.label));
  }
  o += "</svg>\n";
  return o;
}

std::vector<std::filesystem::path> plot_metrics(const std::vector<PlotInput>& inputs,
                                                const std::filesystem::path& out_dir) {
  if (inputs.empty()) throw Error(Errc::Usage, "plot needs at least one metrics file");
  for (const auto& in : inputs)
    if (in.table.schema != inputs.front().table.schema)
      throw Error(Errc::SchemaMismatch, "metrics schemas differ: '" + in.table.schema + "' vs '" +
                                            inputs.front().table.schema + "'");

  const bool by_step = std::all_of(inputs.begin(), inputs.end(), [](const PlotInput& in) {
    return in.table.column("step") >= 0;
  });
  const std::string x_key = by_step ? "step" : "epoch";
  for (const auto& in : inputs)
    if (in.table.column(x_key) < 0) throw Error(Errc::SchemaMismatch, "'" + in.label + "' has no " + x_key + " column");

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& metric : inputs.front().table.columns) {
    if (metric == "step" || metric == "epoch") continue;
    const bool shared = std::all_of(inputs.begin(), inputs.end(), [&](const PlotInput& in) {
      return in.table.column(metric) >= 0;
    });
    if (!shared) continue;
    Chart chart;
    chart.title = metric;
    chart.x_label = x_key;
    chart.y_label = metric;
    for (const auto& in : inputs) {
      chart.series.push_back({in.label, in.table.values(x_key), in.table.values(metric)});
      chart.notes.push_back(fmt::format("{} config_hash={:016x} schema={}", in.label, in.table.config_hash,
                                        in.table.schema));
    }
    const auto path = out_dir / (metric + ".svg");
    std::ofstream out(path);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << render_svg(chart);
    written.push_back(path);
  }
  return written;
}

}  // namespace vspp::plot
