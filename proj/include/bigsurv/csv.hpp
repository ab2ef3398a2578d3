#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bigsurv/types.hpp"

namespace bigsurv {

/// Column roles for survival CSVs. Empty covariate list means "all remaining
/// columns". When entry_col is unset, a column literally named "entry" is
/// used if present (the time,status[,entry],x* convention).
struct ColumnSpec {
  std::string time_col = "time";
  std::string status_col = "status";
  std::optional<std::string> entry_col;
  std::vector<std::string> covariate_cols;
};

namespace detail {

inline void split_line(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
}

inline double parse_cell(std::string_view cell, long line_no,
                         const std::string& column) {
  if (cell.empty())
    throw Error("parse", "missing value at line " + std::to_string(line_no) +
                             ", column '" + column + "'");
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end)
    throw Error("parse", "malformed numeric value '" + std::string(cell) +
                             "' at line " + std::to_string(line_no) +
                             ", column '" + column + "'");
  return value;
}

/// Resolved column positions for one file.
struct ColumnMap {
  int time = -1;
  int status = -1;
  int entry = -1;  // -1 = absent
  std::vector<int> covariates;
  std::vector<std::string> covariate_names;
  std::size_t width = 0;

  ColumnMap(const std::vector<std::string>& header, const ColumnSpec& spec) {
    width = header.size();
    auto find = [&](const std::string& name) {
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
      return -1;
    };
    time = find(spec.time_col);
    if (time < 0)
      throw Error("validation", "time column '" + spec.time_col + "' not found");
    status = find(spec.status_col);
    if (status < 0)
      throw Error("validation",
                  "status column '" + spec.status_col + "' not found");
    if (spec.entry_col) {
      entry = find(*spec.entry_col);
      if (entry < 0)
        throw Error("validation",
                    "entry column '" + *spec.entry_col + "' not found");
    } else {
      entry = find("entry");
    }
    if (time == status || time == entry || status == entry)
      throw Error("validation", "column roles overlap");

    if (!spec.covariate_cols.empty()) {
      for (const auto& name : spec.covariate_cols) {
        const int idx = find(name);
        if (idx < 0)
          throw Error("validation", "covariate column '" + name + "' not found");
        if (idx == time || idx == status || idx == entry)
          throw Error("validation",
                      "covariate column '" + name + "' overlaps another role");
        covariates.push_back(idx);
        covariate_names.push_back(name);
      }
    } else {
      for (std::size_t i = 0; i < header.size(); ++i) {
        const int idx = static_cast<int>(i);
        if (idx == time || idx == status || idx == entry) continue;
        covariates.push_back(idx);
        covariate_names.push_back(header[i]);
      }
    }
  }
};

}  // namespace detail

/// Streams subjects out of a CSV file in file order, materializing at most
/// `chunk_rows` parsed rows at a time. Parse and validation errors carry the
/// 1-based file line number (the header is line 1).
class ChunkedCsvStream : public SubjectStream {
 public:
  explicit ChunkedCsvStream(const std::string& path, ColumnSpec spec = {},
                            std::size_t chunk_rows = 65536)
      : path_(path), spec_(std::move(spec)), chunk_rows_(chunk_rows),
        in_(path) {
    if (chunk_rows_ == 0) throw Error("config", "chunk size must be positive");
    if (!in_) throw Error("io", "cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in_, header))
      throw Error("parse", "empty file (missing header): " + path);
    line_no_ = 1;
    std::vector<std::string_view> cells;
    detail::split_line(header, cells);
    std::vector<std::string> names(cells.begin(), cells.end());
    columns_.emplace(names, spec_);
  }

  const std::vector<std::string>& covariate_names() const {
    return columns_->covariate_names;
  }
  Eigen::Index p() const {
    return static_cast<Eigen::Index>(columns_->covariates.size());
  }

  bool next(Subject& out) override {
    if (pos_ >= chunk_.size() && !refill()) return false;
    out = chunk_[pos_++];
    return true;
  }

 private:
  bool refill() {
    chunk_.clear();
    pos_ = 0;
    std::string line;
    std::vector<std::string_view> cells;
    while (chunk_.size() < chunk_rows_ && std::getline(in_, line)) {
      ++line_no_;
      if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
      detail::split_line(line, cells);
      if (cells.size() != columns_->width)
        throw Error("parse", "expected " + std::to_string(columns_->width) +
                                 " fields but found " +
                                 std::to_string(cells.size()) + " at line " +
                                 std::to_string(line_no_));
      Subject s;
      s.time = detail::parse_cell(cells[columns_->time], line_no_, spec_.time_col);
      const double st =
          detail::parse_cell(cells[columns_->status], line_no_, spec_.status_col);
      if (st != 0.0 && st != 1.0)
        throw Error("validation", "status must be 0 or 1 at line " +
                                      std::to_string(line_no_));
      s.status = static_cast<int>(st);
      if (columns_->entry >= 0)
        s.entry = detail::parse_cell(cells[columns_->entry], line_no_,
                                     spec_.entry_col ? *spec_.entry_col
                                                     : std::string("entry"));
      s.covariates.resize(static_cast<Eigen::Index>(columns_->covariates.size()));
      for (std::size_t j = 0; j < columns_->covariates.size(); ++j)
        s.covariates[static_cast<Eigen::Index>(j)] = detail::parse_cell(
            cells[columns_->covariates[j]], line_no_,
            columns_->covariate_names[j]);
      validate_subject(s, s.covariates.size(), static_cast<std::size_t>(line_no_));
      chunk_.push_back(std::move(s));
    }
    return !chunk_.empty();
  }

  std::string path_;
  ColumnSpec spec_;
  std::size_t chunk_rows_;
  std::ifstream in_;
  std::optional<detail::ColumnMap> columns_;
  std::vector<Subject> chunk_;
  std::size_t pos_ = 0;
  long line_no_ = 0;
};

/// Fully materialized load through the same chunked parser, so streamed and
/// materialized ingestion see identical subject sequences.
inline Dataset read_dataset(const std::string& path, ColumnSpec spec = {},
                            std::size_t chunk_rows = 65536) {
  ChunkedCsvStream stream(path, std::move(spec), chunk_rows);
  std::vector<Subject> subjects;
  Subject s;
  while (stream.next(s)) subjects.push_back(std::move(s));
  return Dataset(std::move(subjects), stream.covariate_names());
}

/// Writes time,status[,entry],covariates with round-trip precision.
inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot open '" + path + "' for writing");
  bool any_entry = false;
  for (const auto& s : data.subjects()) any_entry = any_entry || s.entry > 0.0;
  out << "time,status";
  if (any_entry) out << ",entry";
  for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << data.name(j);
  out << "\n";
  char buf[40];
  for (const auto& s : data.subjects()) {
    std::snprintf(buf, sizeof(buf), "%.17g", s.time);
    out << buf << ',' << s.status;
    if (any_entry) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.entry);
      out << ',' << buf;
    }
    for (Eigen::Index j = 0; j < data.p(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.covariates[j]);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw Error("io", "write failed for '" + path + "'");
}

}  // namespace bigsurv
