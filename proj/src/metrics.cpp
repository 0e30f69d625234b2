// SPDX-License-Identifier: Apache-2.0
#include "vspp/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "vspp/error.hpp"

namespace vspp::metrics {

void MetricsTable::add_row(std::vector<double> row) {
  if (row.size() != columns.size())
    throw Error(Errc::InvalidParams, fmt::format("metrics row has {} values for {} columns", row.size(), columns.size()));
  rows.push_back(std::move(row));
}

int MetricsTable::column(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

std::vector<double> MetricsTable::values(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw Error(Errc::InvalidParams, "metrics have no column '" + name + "'");
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r[static_cast<std::size_t>(c)]);
  return out;
}

void MetricsTable::truncate_after(const std::string& key, double limit) {
  const int c = column(key);
  if (c < 0) throw Error(Errc::InvalidParams, "metrics have no column '" + key + "'");
  std::erase_if(rows, [&](const std::vector<double>& r) { return r[static_cast<std::size_t>(c)] > limit; });
}

std::string to_csv(const MetricsTable& t) {
  std::string out;
  out += "# schema: " + t.schema + "\n";
  out += "# stage: " + t.stage + "\n";
  out += fmt::format("# config_hash: {:016x}\n", t.config_hash);
  std::istringstream yaml(t.config_yaml);
  for (std::string line; std::getline(yaml, line);) out += "# config: " + line + "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += fmt::format("{}{}", i ? "," : "", r[i]);
    out += "\n";
  }
  return out;
}

namespace {

bool take_prefix(const std::string& line, const std::string& prefix, std::string& rest) {
  if (!line.starts_with(prefix)) return false;
  rest = line.substr(prefix.size());
  return true;
}

}  // namespace

MetricsTable parse_csv(const std::string& text) {
  MetricsTable t;
  t.schema.clear();
  std::istringstream in(text);
  std::string line, rest;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (take_prefix(line, "# schema: ", rest)) t.schema = rest;
      else if (take_prefix(line, "# stage: ", rest)) t.stage = rest;
      else if (take_prefix(line, "# config_hash: ", rest)) t.config_hash = std::stoull(rest, nullptr, 16);
      else if (take_prefix(line, "# config: ", rest)) t.config_yaml += rest + "\n";
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (!header_done) {
      if (t.schema != kSchema)
        throw Error(Errc::SchemaMismatch, "metrics schema '" + t.schema + "', expected '" + kSchema + "'");
      t.columns = cells;
      header_done = true;
      continue;
    }
    std::vector<double> values;
    try {
      for (const auto& c : cells) values.push_back(std::stod(c));
    } catch (const std::exception&) {
      throw Error(Errc::SchemaMismatch, "non-numeric metrics row: " + line);
    }
    t.add_row(std::move(values));
  }
  if (t.schema != kSchema)
    throw Error(Errc::SchemaMismatch, "metrics schema '" + t.schema + "', expected '" + kSchema + "'");
  return t;
}

void save(const std::filesystem::path& path, const MetricsTable& table) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out << to_csv(table);
  }
  std::filesystem::rename(tmp, path);
}

MetricsTable load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read metrics " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

double regression_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(Errc::LengthMismatch, "slope needs equally long series");
  if (x.size() < 2) throw Error(Errc::InvalidParams, "slope needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw Error(Errc::InvalidParams, "slope undefined for constant x");
  return sxy / sxx;
}

}  // namespace vspp::metrics
