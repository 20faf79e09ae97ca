#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cecil/common.hpp"

namespace cecil {

/// Compact numeric rendering for CSV/report fields; infinities become "inf".
inline std::string format_double(double v, int precision = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

// Minimal CSV support for the manifests and metric tables this project
// emits. Fields are written verbatim; none of our fields contain commas,
// quotes or newlines, so no quoting is implemented.
class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path);
    if (!out_) throw StageError("cannot open csv for writing: " + path.string());
  }

  void row(const std::vector<std::string>& fields) {
    if (width_ == 0) width_ = fields.size();
    if (fields.size() != width_)
      throw StageError("csv row has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(width_));
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

private:
  std::ofstream out_;
  std::size_t width_ = 0;
};

inline std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StageError("cannot open csv: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace cecil
