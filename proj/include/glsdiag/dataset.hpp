#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "glsdiag/types.hpp"

namespace glsdiag {

/// One observation of a long-format longitudinal dataset. Covariate values
/// are kept as raw text; numeric parsing happens when a design is built.
struct LongRow {
  std::string subject;
  double time = 0;
  double response = 0;
  std::vector<std::string> covariates;
  long source_line = 0;
};

/// Long-format dataset, canonically sorted by (subject, time).
struct LongDataset {
  std::string response_name;
  std::vector<std::string> covariate_names;
  std::vector<LongRow> rows;

  Index n_rows() const { return static_cast<Index>(rows.size()); }

  Index n_subjects() const {
    Index count = 0;
    for (size_t i = 0; i < rows.size(); ++i)
      if (i == 0 || rows[i].subject != rows[i - 1].subject) ++count;
    return count;
  }

  /// Sort rows canonically and check the (subject, time) uniqueness invariant.
  void canonicalize() {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const LongRow& a, const LongRow& b) {
                       if (a.subject != b.subject) return a.subject < b.subject;
                       return a.time < b.time;
                     });
    for (size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].subject == rows[i - 1].subject &&
          rows[i].time == rows[i - 1].time)
        throw data_error("duplicate observation for subject '" + rows[i].subject +
                         "' at time " + std::to_string(rows[i].time) + " (line " +
                         std::to_string(rows[i].source_line) + ")");
    }
  }

  GroupLayout layout() const {
    GroupLayout groups;
    Index start = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
      const bool last = i + 1 == rows.size();
      if (last || rows[i + 1].subject != rows[i].subject) {
        groups.blocks.push_back(
            {rows[start].subject, start, static_cast<Index>(i) + 1 - start});
        start = static_cast<Index>(i) + 1;
      }
    }
    return groups;
  }
};

/// Which columns enter the design matrix and how.
struct ModelSpec {
  std::string response;
  std::vector<std::string> numeric_terms;
  std::vector<std::pair<std::string, std::string>> categorical_terms;  // (column, reference level)
  bool intercept = true;
};

/// Response, design matrix and grouping metadata, ready to fit.
template <class Scalar = double>
struct RegressionProblem {
  Vector<Scalar> y;
  Matrix<Scalar> x;
  GroupLayout groups;
  Vector<Scalar> times;
  std::vector<std::string> column_names;

  Index n() const { return y.size(); }
  Index p() const { return x.cols(); }

  void validate() const {
    if (x.rows() != n()) throw data_error("dimension mismatch between Y and X");
    if (times.size() != n())
      throw data_error("dimension mismatch between Y and observation times");
    if (p() < 1) throw data_error("design matrix has no columns");
    if (n() <= p())
      throw data_error("need more observations than coefficients (n=" +
                       std::to_string(n()) + ", p=" + std::to_string(p()) + ")");
    groups.validate(n());
    for (const auto& g : groups.blocks)
      for (Index k = 1; k < g.size; ++k)
        if (!(times(g.start + k) > times(g.start + k - 1)))
          throw data_error("non-monotone times within group '" + g.id + "'");
    if (column_names.size() != static_cast<size_t>(p()))
      throw data_error("column name count does not match design width");
  }
};

using RegressionProblemd = RegressionProblem<double>;

namespace detail {

inline double parse_numeric_cell(const std::string& cell, const std::string& column,
                                 long line);

}  // namespace detail

/// Expand a model spec against a long dataset: intercept column, numeric
/// columns as-is, categoricals dummy-coded against the reference level.
template <class Scalar = double>
RegressionProblem<Scalar> build_design(const LongDataset& data, const ModelSpec& spec) {
  if (data.rows.empty()) throw data_error("dataset is empty");
  if (spec.response != data.response_name)
    throw data_error("unknown column '" + spec.response +
                     "' (dataset response column is '" + data.response_name + "')");

  const auto column_index = [&](const std::string& name) -> size_t {
    for (size_t j = 0; j < data.covariate_names.size(); ++j)
      if (data.covariate_names[j] == name) return j;
    throw data_error("unknown column '" + name + "'");
  };

  struct DesignColumn {
    std::string name;
    size_t source = 0;
    bool is_intercept = false;
    bool is_dummy = false;
    std::string level;
  };
  std::vector<DesignColumn> plan;
  if (spec.intercept) plan.push_back({"intercept", 0, true, false, ""});
  for (const auto& term : spec.numeric_terms)
    plan.push_back({term, column_index(term), false, false, ""});
  for (const auto& [term, reference] : spec.categorical_terms) {
    const size_t j = column_index(term);
    std::set<std::string> levels;
    for (const auto& row : data.rows) levels.insert(row.covariates[j]);
    if (levels.count(reference) == 0)
      throw data_error("unknown level '" + reference + "' for column '" + term + "'");
    for (const auto& level : levels)
      if (level != reference)
        plan.push_back({term + "=" + level, j, false, true, level});
  }
  if (plan.empty()) throw data_error("model spec selects no design columns");

  const Index n = data.n_rows();
  const Index p = static_cast<Index>(plan.size());
  RegressionProblem<Scalar> problem;
  problem.y.resize(n);
  problem.x.resize(n, p);
  problem.times.resize(n);
  for (Index i = 0; i < n; ++i) {
    const LongRow& row = data.rows[static_cast<size_t>(i)];
    problem.y(i) = Scalar(row.response);
    problem.times(i) = Scalar(row.time);
    for (Index c = 0; c < p; ++c) {
      const DesignColumn& col = plan[static_cast<size_t>(c)];
      if (col.is_intercept) {
        problem.x(i, c) = Scalar(1);
      } else if (col.is_dummy) {
        problem.x(i, c) = row.covariates[col.source] == col.level ? Scalar(1) : Scalar(0);
      } else {
        problem.x(i, c) = Scalar(detail::parse_numeric_cell(
            row.covariates[col.source], col.name, row.source_line));
      }
    }
  }
  for (const auto& col : plan) problem.column_names.push_back(col.name);
  problem.groups = data.layout();
  problem.validate();
  return problem;
}

}  // namespace glsdiag
