#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "chaosbench/error.hpp"

namespace chaosbench {

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Comma-separated table. When `provenance` is non-empty every row gets a
// trailing config_hash column.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header, std::string provenance = {})
      : header_(std::move(header)), provenance_(std::move(provenance)) {
    if (!provenance_.empty()) header_.push_back("config_hash");
  }

  CsvTable& row(std::vector<std::string> cells) {
    if (!provenance_.empty()) cells.push_back(provenance_);
    if (cells.size() != header_.size()) throw InputError("csv: row width does not match header");
    rows_.push_back(std::move(cells));
    return *this;
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += quote(cells[i]);
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void save(const std::string& file) const {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw InputError("cannot write " + file);
    os << str();
  }

  std::size_t size() const { return rows_.size(); }

 private:
  // Cells holding a comma, quote or newline are quoted, inner quotes doubled.
  static std::string quote(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string q = "\"";
    for (char ch : cell) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + '"';
  }

  std::vector<std::string> header_;
  std::string provenance_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace chaosbench
