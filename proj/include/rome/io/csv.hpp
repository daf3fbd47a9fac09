#pragma once

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "rome/core_model.hpp"
#include "rome/error.hpp"

namespace rome::io {

/// Splits one CSV record. Double quotes group fields and "" escapes a quote.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline bool parse_number(const std::string& text, double& value) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  if (b == e) return false;
  const std::string trimmed = text.substr(b, e - b);
  char* end = nullptr;
  errno = 0;
  value = std::strtod(trimmed.c_str(), &end);
  return errno == 0 && end == trimmed.c_str() + trimmed.size() && std::isfinite(value);
}

struct IngestResult {
  Dataset data;
  std::size_t dropped = 0;
};

/// Reads the columns named by `spec`. Rows with a missing or non-numeric value
/// in any selected column are dropped and counted.
inline IngestResult ingest_csv(const std::string& path, const FeatureSpec& spec) {
  spec.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset '" + path + "' has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t k = 0; k < header.size(); ++k) pos.emplace(header[k], k);
  auto column = [&](const std::string& name) {
    auto it = pos.find(name);
    if (it == pos.end()) throw DataError("dataset '" + path + "' has no column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> a_col, s_col;
  for (const auto& n : spec.a_names) a_col.push_back(column(n));
  for (const auto& n : spec.s_names) s_col.push_back(column(n));
  const std::size_t y_col = column(spec.y_name);

  std::vector<double> a_vals, s_vals, y_vals;
  IngestResult res;
  std::vector<double> row_a(a_col.size()), row_s(s_col.size());
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    auto get = [&](std::size_t c, double& v) { return c < fields.size() && parse_number(fields[c], v); };
    bool ok = true;
    double yv = 0.0;
    for (std::size_t k = 0; ok && k < a_col.size(); ++k) ok = get(a_col[k], row_a[k]);
    for (std::size_t k = 0; ok && k < s_col.size(); ++k) ok = get(s_col[k], row_s[k]);
    ok = ok && get(y_col, yv);
    if (!ok) {
      ++res.dropped;
      continue;
    }
    a_vals.insert(a_vals.end(), row_a.begin(), row_a.end());
    s_vals.insert(s_vals.end(), row_s.begin(), row_s.end());
    y_vals.push_back(yv);
  }
  const auto n = static_cast<Index>(y_vals.size());
  if (n == 0) throw DataError("dataset '" + path + "' has no usable rows");
  const auto pa = static_cast<Index>(a_col.size());
  const auto ps = static_cast<Index>(s_col.size());
  res.data.spec = spec;
  res.data.a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(a_vals.data(), n, pa);
  res.data.s = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(s_vals.data(), n, ps);
  res.data.y = Eigen::Map<const Vector>(y_vals.data(), n);
  return res;
}

/// Round-trip text for a double.
inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Report-table text for a double; NaN is written as an empty cell.
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Accumulates a table in memory so that the file is written in one go.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : width_(header.size()) { add(header); }

  void add(const std::vector<std::string>& row) {
    rome::detail::require(row.size() == width_, "table: row width differs from the header");
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) text_ += ',';
      text_ += quote(row[k]);
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes A, S and Y columns under their spec names.
inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::vector<std::string> header = data.spec.a_names;
  header.insert(header.end(), data.spec.s_names.begin(), data.spec.s_names.end());
  header.push_back(data.spec.y_name);
  Table t(header);
  std::vector<std::string> row(header.size());
  for (Index i = 0; i < data.n(); ++i) {
    std::size_t k = 0;
    for (Index j = 0; j < data.a.cols(); ++j) row[k++] = exact(data.a(i, j));
    for (Index j = 0; j < data.s.cols(); ++j) row[k++] = exact(data.s(i, j));
    row[k] = exact(data.y(i));
    t.add(row);
  }
  write_text(path, t.str());
}

}  // namespace rome::io
