#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "glsdiag/dataset.hpp"
#include "glsdiag/types.hpp"

namespace glsdiag {

// Plain comma-separated files: UTF-8, '.' decimal separator, no quoting.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
  if (begin == end) return false;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

inline double parse_numeric_cell(const std::string& cell, const std::string& column,
                                 long line) {
  double v = 0;
  if (!parse_double(cell, v))
    throw data_error("non-numeric value '" + cell + "' in column '" + column +
                     "' (line " + std::to_string(line) + ")");
  return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline bool blank(const std::string& line) {
  for (char ch : line)
    if (ch != ' ' && ch != '\t' && ch != '\r') return false;
  return true;
}

inline std::string fmt_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// Column roles of a long-format CSV; every other column becomes a covariate.
struct CsvSchema {
  std::string subject = "subject";
  std::string time = "time";
  std::string response = "response";
};

inline LongDataset load_long_csv(const std::string& path, const CsvSchema& schema) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw data_error("file '" + path + "' is empty");

  const auto header = detail::split_csv_line(lines[0]);
  long subject_col = -1, time_col = -1, response_col = -1;
  std::vector<size_t> covariate_cols;
  LongDataset data;
  for (size_t j = 0; j < header.size(); ++j) {
    if (header[j] == schema.subject)
      subject_col = static_cast<long>(j);
    else if (header[j] == schema.time)
      time_col = static_cast<long>(j);
    else if (header[j] == schema.response)
      response_col = static_cast<long>(j);
    else {
      covariate_cols.push_back(j);
      data.covariate_names.push_back(header[j]);
    }
  }
  if (subject_col < 0)
    throw data_error("missing column '" + schema.subject + "' (subject) in '" + path + "'");
  if (time_col < 0)
    throw data_error("missing column '" + schema.time + "' (time) in '" + path + "'");
  if (response_col < 0)
    throw data_error("missing column '" + schema.response + "' (response) in '" + path + "'");
  data.response_name = schema.response;

  for (size_t li = 1; li < lines.size(); ++li) {
    if (detail::blank(lines[li])) continue;
    const long line_no = static_cast<long>(li) + 1;
    const auto cells = detail::split_csv_line(lines[li]);
    if (cells.size() != header.size())
      throw data_error("expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()) + " (line " +
                       std::to_string(line_no) + ")");
    LongRow row;
    row.source_line = line_no;
    row.subject = cells[static_cast<size_t>(subject_col)];
    if (row.subject.empty())
      throw data_error("missing subject id (line " + std::to_string(line_no) + ")");
    row.time = detail::parse_numeric_cell(cells[static_cast<size_t>(time_col)],
                                          schema.time, line_no);
    if (row.time < 0)
      throw data_error("negative time (line " + std::to_string(line_no) + ")");
    row.response = detail::parse_numeric_cell(cells[static_cast<size_t>(response_col)],
                                              schema.response, line_no);
    for (size_t j : covariate_cols) {
      if (cells[j].empty() || cells[j] == "NA")
        throw data_error("missing value in column '" + header[j] + "' (line " +
                         std::to_string(line_no) + ")");
      row.covariates.push_back(cells[j]);
    }
    data.rows.push_back(std::move(row));
  }
  if (data.rows.empty()) throw data_error("file '" + path + "' has no data rows");
  data.canonicalize();
  return data;
}

inline void write_long_csv(const std::string& path, const LongDataset& data) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file '" + path + "'");
  out << "subject,time," << data.response_name;
  for (const auto& name : data.covariate_names) out << ',' << name;
  out << '\n';
  for (const auto& row : data.rows) {
    out << row.subject << ',' << detail::fmt_full(row.time) << ','
        << detail::fmt_full(row.response);
    for (const auto& cell : row.covariates) out << ',' << cell;
    out << '\n';
  }
}

/// Load a precomputed design: X as a headerless numeric matrix, Y as one
/// value per line, and a groups file with header `subject_id,time`, one row
/// per observation in the same order as X.
template <class Scalar = double>
RegressionProblem<Scalar> load_design_csv(const std::string& x_path,
                                          const std::string& y_path,
                                          const std::string& groups_path) {
  RegressionProblem<Scalar> problem;

  // X
  {
    const auto lines = detail::read_lines(x_path);
    std::vector<std::vector<double>> rows;
    for (size_t li = 0; li < lines.size(); ++li) {
      if (detail::blank(lines[li])) continue;
      const auto cells = detail::split_csv_line(lines[li]);
      std::vector<double> row(cells.size());
      for (size_t j = 0; j < cells.size(); ++j)
        row[j] = detail::parse_numeric_cell(cells[j], "x" + std::to_string(j + 1),
                                            static_cast<long>(li) + 1);
      if (!rows.empty() && row.size() != rows[0].size())
        throw data_error("ragged design matrix in '" + x_path + "' (line " +
                         std::to_string(li + 1) + ")");
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw data_error("file '" + x_path + "' has no data rows");
    problem.x.resize(static_cast<Index>(rows.size()),
                     static_cast<Index>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < rows[i].size(); ++j)
        problem.x(static_cast<Index>(i), static_cast<Index>(j)) = Scalar(rows[i][j]);
    for (Index j = 0; j < problem.x.cols(); ++j)
      problem.column_names.push_back("x" + std::to_string(j + 1));
  }

  // Y
  {
    const auto lines = detail::read_lines(y_path);
    std::vector<double> values;
    for (size_t li = 0; li < lines.size(); ++li) {
      if (detail::blank(lines[li])) continue;
      values.push_back(detail::parse_numeric_cell(detail::split_csv_line(lines[li])[0],
                                                  "response",
                                                  static_cast<long>(li) + 1));
    }
    problem.y.resize(static_cast<Index>(values.size()));
    for (size_t i = 0; i < values.size(); ++i)
      problem.y(static_cast<Index>(i)) = Scalar(values[i]);
  }

  // groups
  {
    const auto lines = detail::read_lines(groups_path);
    if (lines.empty()) throw data_error("file '" + groups_path + "' is empty");
    const auto header = detail::split_csv_line(lines[0]);
    long subject_col = -1, time_col = -1;
    for (size_t j = 0; j < header.size(); ++j) {
      if (header[j] == "subject_id") subject_col = static_cast<long>(j);
      if (header[j] == "time") time_col = static_cast<long>(j);
    }
    if (subject_col < 0 || time_col < 0)
      throw data_error("groups file '" + groups_path +
                       "' needs columns subject_id,time");
    std::vector<std::string> subjects;
    std::vector<double> times;
    for (size_t li = 1; li < lines.size(); ++li) {
      if (detail::blank(lines[li])) continue;
      const auto cells = detail::split_csv_line(lines[li]);
      if (cells.size() != header.size())
        throw data_error("bad field count in '" + groups_path + "' (line " +
                         std::to_string(li + 1) + ")");
      subjects.push_back(cells[static_cast<size_t>(subject_col)]);
      times.push_back(detail::parse_numeric_cell(cells[static_cast<size_t>(time_col)],
                                                 "time", static_cast<long>(li) + 1));
    }
    if (static_cast<Index>(subjects.size()) != problem.y.size() ||
        problem.y.size() != problem.x.rows())
      throw data_error("dimension mismatch: X has " + std::to_string(problem.x.rows()) +
                       " rows, Y has " + std::to_string(problem.y.size()) +
                       ", groups file has " + std::to_string(subjects.size()));

    problem.times.resize(static_cast<Index>(times.size()));
    for (size_t i = 0; i < times.size(); ++i)
      problem.times(static_cast<Index>(i)) = Scalar(times[i]);

    Index start = 0;
    for (size_t i = 0; i < subjects.size(); ++i) {
      const bool last = i + 1 == subjects.size();
      if (last || subjects[i + 1] != subjects[i]) {
        problem.groups.blocks.push_back(
            {subjects[static_cast<size_t>(start)], start,
             static_cast<Index>(i) + 1 - start});
        start = static_cast<Index>(i) + 1;
      }
    }
    // a subject split into two runs means the file is not grouped
    for (size_t a = 0; a < problem.groups.blocks.size(); ++a)
      for (size_t b = a + 1; b < problem.groups.blocks.size(); ++b)
        if (problem.groups.blocks[a].id == problem.groups.blocks[b].id)
          throw data_error("subject '" + problem.groups.blocks[a].id +
                           "' appears in non-adjacent rows of '" + groups_path + "'");
  }

  problem.validate();
  return problem;
}

}  // namespace glsdiag
