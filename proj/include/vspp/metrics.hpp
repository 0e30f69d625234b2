// SPDX-License-Identifier: Apache-2.0
//
// Schema-versioned metrics CSV:
//   # schema: vspp-metrics/1
//   # stage: <stage>
//   # config_hash: <16 hex digits>
//   # config: <one line of the run's YAML per comment line>
//   col_a,col_b,...
//   1,0.5,...
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vspp::metrics {

inline constexpr const char* kSchema = "vspp-metrics/1";

struct MetricsTable {
  std::string schema = kSchema;
  std::string stage;
  std::uint64_t config_hash = 0;
  std::string config_yaml;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// InvalidParams when the row width disagrees with the columns.
  void add_row(std::vector<double> row);
  /// Index of `name`, or -1.
  int column(const std::string& name) const;
  std::vector<double> values(const std::string& name) const;
  /// Drops rows whose `key` column exceeds `limit` (resume truncation).
  void truncate_after(const std::string& key, double limit);
};

std::string to_csv(const MetricsTable& table);
/// SchemaMismatch on a missing or different schema line.
MetricsTable parse_csv(const std::string& text);

/// Whole-file rewrite through a temporary, so readers never see a partial file.
void save(const std::filesystem::path& path, const MetricsTable& table);
MetricsTable load(const std::filesystem::path& path);

/// Least-squares slope of y against x.
double regression_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace vspp::metrics
