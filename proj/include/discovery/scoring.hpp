#pragma once

// Detection-scoring estimates (accuracy, precision, recall) on the held-out
// split, with normal-approximation confidence intervals.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "discovery/data_model.hpp"

namespace discovery {

struct EvalRow {
  std::string doc_id;
  int y_true = 0;
  int y_pred = 0;
};

struct EvalTable {
  FeatureId feature_id = 0;
  std::vector<EvalRow> rows;
  std::size_t invalid_count = 0;

  // Labels in {0,1} and no repeated doc_id.
  void validate() const;
};

enum class ScoreKind { accuracy, precision, recall };

// arcsine: the interval for asin(sqrt(q)) mapped back, which keeps its
// nominal level near the boundary; wald: q +- z sqrt(q(1-q)/m), clipped.
enum class IntervalMethod { arcsine, wald };

IntervalMethod parse_interval_method(std::string_view text);
std::string to_string(IntervalMethod method);

struct ScoreEstimate {
  ScoreKind kind = ScoreKind::accuracy;
  double point = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  // Valid rows in the table.
  std::size_t m_effective = 0;
  // Rows in the denominator event (all rows for accuracy).
  std::size_t denominator = 0;
  bool undefined = false;
};

// Standard normal quantile.
double normal_quantile(double p);

// Interval for a proportion estimated from `count` Bernoulli trials.
std::pair<double, double> proportion_interval(double point, std::size_t count, double alpha_ci, IntervalMethod method);

ScoreEstimate a_score(const EvalTable& table, double alpha_ci = 0.05, IntervalMethod method = IntervalMethod::arcsine);
ScoreEstimate p_score(const EvalTable& table, double alpha_ci = 0.05, IntervalMethod method = IntervalMethod::arcsine);
ScoreEstimate r_score(const EvalTable& table, double alpha_ci = 0.05, IntervalMethod method = IntervalMethod::arcsine);

struct ScoreRow {
  FeatureId feature_id = 0;
  std::string description;
  std::optional<ScoreEstimate> accuracy;
  std::optional<ScoreEstimate> precision;
  std::optional<ScoreEstimate> recall;
  std::size_t invalid_count = 0;
};

ScoreRow score_table(const EvalTable& table, std::string description, double alpha_ci, IntervalMethod method);

// Columns: feature_id, description, a_score, a_ci_lower, a_ci_upper, p_score,
// r_score, m_effective, invalid_count. Undefined values print as NA.
void write_score_report(const std::vector<ScoreRow>& rows, std::ostream& out);
std::vector<ScoreRow> read_score_report(std::istream& in, const std::string& source);

}  // namespace discovery
