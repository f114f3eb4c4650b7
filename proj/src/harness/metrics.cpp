#include "fisherlens/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fisherlens/error.hpp"
#include "fisherlens/harness/config.hpp"

namespace fisherlens::harness {

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "epoch",          "train_loss",           "test_acc",       "test_cckl_sym",
      "avg_fisher_fro", "log10_avg_fisher_fro", "avg_lambda_max", "adv_acc_pgd",
      "adv_acc_cw",     "lin_bound_violations"};
  return cols;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_csv(const std::vector<MetricRecord>& records) {
  std::string out;
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.epoch);
    for (double v : {r.train_loss, r.test_acc, r.test_cckl_sym, r.avg_fisher_fro,
                     r.log10_avg_fisher_fro, r.avg_lambda_max, r.adv_acc_pgd, r.adv_acc_cw}) {
      out += ',';
      out += format_number(v);
    }
    out += ',' + std::to_string(r.lin_bound_violations) + '\n';
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      fail(ErrorKind::Io, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorKind::Io, "cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
  }
}

bool CsvTable::has(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) fail(ErrorKind::Format, "csv: missing column '" + name + "'");
  const auto idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string& cell = rows[r][idx];
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size())
      fail(ErrorKind::Format, "csv: column '" + name + "' row " + std::to_string(r + 1) +
                                  ": not a number: '" + cell + "'");
    out.push_back(v);
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      fail(ErrorKind::Format, source + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.header.size()) + " cells, found " +
                                  std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) fail(ErrorKind::Format, source + ": empty csv");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

void require_metrics_schema(const CsvTable& table, const std::string& source) {
  for (const auto& c : metrics_columns())
    if (!table.has(c)) fail(ErrorKind::Format, source + ": missing column '" + c + "'");
}

}  // namespace fisherlens::harness
