#ifndef CVXLEARN_CSV_HPP
#define CVXLEARN_CSV_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvxlearn/dataset.hpp"

namespace cvxlearn {

namespace detail {

// RFC-4180-ish split: handles quoted fields with embedded commas and "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // tolerate CRLF line endings
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size() && std::isfinite(out);
  } catch (...) {
    return false;
  }
}

}  // namespace detail

// Read a rectangular CSV into a Dataset.  `target_column` < 0 means the last
// column.  Row/column coordinates in errors are 1-based over the data rows
// (the header, if present, is row 0).
template <class Scalar>
Dataset<Scalar> ingest_csv(const std::string& path, int target_column = -1,
                           bool has_header = true, bool classification = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  size_t width = 0;
  size_t lineno = 0;
  bool header_skipped = !has_header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header_skipped) {
      header_skipped = true;
      width = detail::split_csv_line(line).size();
      continue;
    }
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw std::runtime_error("ingest_csv: ragged row at line " + std::to_string(lineno) +
                               " (expected " + std::to_string(width) + " cells, got " +
                               std::to_string(cells.size()) + ")");
    std::vector<double> vals(cells.size());
    for (size_t c = 0; c < cells.size(); ++c) {
      if (!detail::parse_double(cells[c], vals[c]))
        throw std::runtime_error("ingest_csv: non-numeric cell \"" + cells[c] + "\" at (" +
                                 std::to_string(lineno) + ", " + std::to_string(c + 1) + ")");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("ingest_csv: empty file " + path);
  const size_t d_total = width;
  if (d_total < 2) throw std::runtime_error("ingest_csv: need at least 2 columns");
  size_t tgt = target_column < 0 ? d_total - 1 : static_cast<size_t>(target_column);
  if (tgt >= d_total)
    throw std::runtime_error("ingest_csv: target column " + std::to_string(tgt) +
                             " out of range (width " + std::to_string(d_total) + ")");

  Dataset<Scalar> out;
  out.classification = classification;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  out.X.resize(n, static_cast<Eigen::Index>(d_total - 1));
  if (!classification) out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (size_t c = 0; c < d_total; ++c) {
      if (c == tgt) continue;
      out.X(i, col++) = static_cast<Scalar>(rows[static_cast<size_t>(i)][c]);
    }
    double t = rows[static_cast<size_t>(i)][tgt];
    if (classification) {
      long lab = std::lround(t);
      if (std::abs(t - static_cast<double>(lab)) > 1e-9 || lab < 0)
        throw std::runtime_error("ingest_csv: label at row " + std::to_string(i + 1) +
                                 " is not a non-negative integer");
      out.labels.push_back(static_cast<int>(lab));
    } else {
      out.y(i) = static_cast<Scalar>(t);
    }
  }
  return out;
}

template <class Scalar>
void write_dataset_csv(const Dataset<Scalar>& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot write " + path);
  for (Eigen::Index l = 0; l < data.d(); ++l) out << "x" << l << ",";
  out << (data.classification ? "label" : "y") << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index l = 0; l < data.d(); ++l) {
      std::snprintf(buf, sizeof(buf), "%.17g,", static_cast<double>(data.X(i, l)));
      out << buf;
    }
    if (data.classification) {
      out << data.labels[static_cast<size_t>(i)] << "\n";
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g\n", static_cast<double>(data.y(i)));
      out << buf;
    }
  }
}

}  // namespace cvxlearn

#endif  // CVXLEARN_CSV_HPP
