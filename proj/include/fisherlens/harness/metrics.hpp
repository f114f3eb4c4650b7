#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fisherlens/training.hpp"

namespace fisherlens::harness {

/// Column order of the per-epoch metrics CSV.
const std::vector<std::string>& metrics_columns();

/// Shortest round-trip text for a double ("%.17g"); non-finite values print
/// as nan / inf / -inf.
std::string format_number(double v);

std::string metrics_csv(const std::vector<MetricRecord>& records);

/// Writes `content` to `path` through a sibling temp file and rename, so
/// readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Numeric column by name; ErrorKind::Format naming the column if absent
  /// or unparsable.
  std::vector<double> column(const std::string& name) const;
  bool has(const std::string& name) const;
};

CsvTable parse_csv(std::string_view text, const std::string& source = "csv");
CsvTable read_csv(const std::filesystem::path& path);

/// Checks that a table carries every metrics column.
void require_metrics_schema(const CsvTable& table, const std::string& source);

}  // namespace fisherlens::harness
