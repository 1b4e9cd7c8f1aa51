#include "discovery/scoring.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <unordered_set>

#include "discovery/error.hpp"
#include "discovery/tsv.hpp"

namespace discovery {

void EvalTable::validate() const {
  std::unordered_set<std::string> seen;
  for (const EvalRow& row : rows) {
    if ((row.y_true != 0 && row.y_true != 1) || (row.y_pred != 0 && row.y_pred != 1)) {
      throw ValidationError("evaluation labels must be 0 or 1");
    }
    if (!seen.insert(row.doc_id).second) {
      throw ValidationError("document '" + row.doc_id + "' appears twice in the evaluation table of feature " +
                            std::to_string(feature_id));
    }
  }
}

IntervalMethod parse_interval_method(std::string_view text) {
  if (text == "arcsine") return IntervalMethod::arcsine;
  if (text == "wald") return IntervalMethod::wald;
  throw ConfigError("unknown interval method '" + std::string(text) + "'");
}

std::string to_string(IntervalMethod method) { return method == IntervalMethod::arcsine ? "arcsine" : "wald"; }

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

std::pair<double, double> proportion_interval(double point, std::size_t count, double alpha_ci,
                                              IntervalMethod method) {
  if (!(alpha_ci > 0.0 && alpha_ci < 1.0)) throw ConfigError("interval level alpha must lie in (0, 1)");
  const double z = normal_quantile(1.0 - alpha_ci / 2.0);
  const double m = static_cast<double>(count);
  if (method == IntervalMethod::wald) {
    const double half = z * std::sqrt(point * (1.0 - point) / m);
    return {std::max(0.0, point - half), std::min(1.0, point + half)};
  }
  // Delta method on g(q) = asin(sqrt(q)), whose variance is 1/(4m).
  const double g = std::asin(std::sqrt(point));
  const double half = z / (2.0 * std::sqrt(m));
  const double lo = std::max(0.0, g - half);
  const double hi = std::min(std::numbers::pi / 2.0, g + half);
  const double lower = std::sin(lo) * std::sin(lo);
  const double upper = std::sin(hi) * std::sin(hi);
  return {std::min(lower, point), std::max(upper, point)};
}

namespace {

ScoreEstimate ratio_estimate(ScoreKind kind, std::size_t hits, std::size_t denominator, std::size_t m,
                             double alpha_ci, IntervalMethod method, FeatureId feature_id) {
  ScoreEstimate est;
  est.kind = kind;
  est.m_effective = m;
  est.denominator = denominator;
  if (denominator == 0) {
    est.undefined = true;
    return est;
  }
  est.point = static_cast<double>(hits) / static_cast<double>(denominator);
  std::tie(est.ci_lower, est.ci_upper) = proportion_interval(est.point, denominator, alpha_ci, method);
  if (est.point == 0.0 || est.point == 1.0) {
    const char* name = kind == ScoreKind::accuracy ? "A-score" : kind == ScoreKind::precision ? "P-score" : "R-score";
    spdlog::warn("{} of feature {} is {}; its interval relies on a boundary approximation", name, feature_id,
                 est.point);
  }
  return est;
}

}  // namespace

ScoreEstimate a_score(const EvalTable& table, double alpha_ci, IntervalMethod method) {
  table.validate();
  const std::size_t m = table.rows.size();
  if (m == 0) throw ValidationError("no valid evaluation rows for feature " + std::to_string(table.feature_id));
  std::size_t agree = 0;
  for (const EvalRow& row : table.rows) agree += row.y_true == row.y_pred;
  return ratio_estimate(ScoreKind::accuracy, agree, m, m, alpha_ci, method, table.feature_id);
}

ScoreEstimate p_score(const EvalTable& table, double alpha_ci, IntervalMethod method) {
  table.validate();
  if (table.rows.empty()) throw ValidationError("no valid evaluation rows for feature " + std::to_string(table.feature_id));
  std::size_t tp = 0;
  std::size_t predicted = 0;
  for (const EvalRow& row : table.rows) {
    tp += row.y_true == 1 && row.y_pred == 1;
    predicted += row.y_pred == 1;
  }
  return ratio_estimate(ScoreKind::precision, tp, predicted, table.rows.size(), alpha_ci, method, table.feature_id);
}

ScoreEstimate r_score(const EvalTable& table, double alpha_ci, IntervalMethod method) {
  table.validate();
  if (table.rows.empty()) throw ValidationError("no valid evaluation rows for feature " + std::to_string(table.feature_id));
  std::size_t tp = 0;
  std::size_t positive = 0;
  for (const EvalRow& row : table.rows) {
    tp += row.y_true == 1 && row.y_pred == 1;
    positive += row.y_true == 1;
  }
  return ratio_estimate(ScoreKind::recall, tp, positive, table.rows.size(), alpha_ci, method, table.feature_id);
}

ScoreRow score_table(const EvalTable& table, std::string description, double alpha_ci, IntervalMethod method) {
  ScoreRow row;
  row.feature_id = table.feature_id;
  row.description = std::move(description);
  row.invalid_count = table.invalid_count;
  if (!table.rows.empty()) {
    row.accuracy = a_score(table, alpha_ci, method);
    row.precision = p_score(table, alpha_ci, method);
    row.recall = r_score(table, alpha_ci, method);
  } else {
    spdlog::warn("feature {} has no valid classifications; scores are NA", table.feature_id);
  }
  return row;
}

namespace {

std::string cell(const std::optional<ScoreEstimate>& est, double ScoreEstimate::*field) {
  if (!est || est->undefined) return "NA";
  return tsv::format_fixed((*est).*field, 4);
}

std::optional<double> parse_cell(std::string_view text, const std::string& source, std::size_t line_no) {
  if (text == "NA") return std::nullopt;
  double value = 0.0;
  if (!tsv::parse_double(text, value)) throw ParseError(source, line_no, "invalid number '" + std::string(text) + "'");
  return value;
}

constexpr const char* kHeader =
    "feature_id\tdescription\ta_score\ta_ci_lower\ta_ci_upper\tp_score\tr_score\tm_effective\tinvalid_count";

}  // namespace

void write_score_report(const std::vector<ScoreRow>& rows, std::ostream& out) {
  out << kHeader << '\n';
  for (const ScoreRow& row : rows) {
    out << row.feature_id << '\t' << tsv::sanitize_cell(row.description) << '\t'
        << cell(row.accuracy, &ScoreEstimate::point) << '\t' << cell(row.accuracy, &ScoreEstimate::ci_lower) << '\t'
        << cell(row.accuracy, &ScoreEstimate::ci_upper) << '\t' << cell(row.precision, &ScoreEstimate::point)
        << '\t' << cell(row.recall, &ScoreEstimate::point) << '\t'
        << (row.accuracy ? row.accuracy->m_effective : 0) << '\t' << row.invalid_count << '\n';
  }
}

std::vector<ScoreRow> read_score_report(std::istream& in, const std::string& source) {
  std::vector<ScoreRow> rows;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || tsv::strip_cr(line) != kHeader) {
    throw ParseError(source, 1, "missing or unexpected score report header");
  }
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = tsv::strip_cr(line);
    if (view.empty()) continue;
    const auto f = tsv::split(view);
    if (f.size() != 9) throw ParseError(source, line_no, "expected 9 columns");
    ScoreRow row;
    unsigned long long id = 0;
    unsigned long long m = 0;
    unsigned long long invalid = 0;
    if (!tsv::parse_u64(f[0], id) || !tsv::parse_u64(f[7], m) || !tsv::parse_u64(f[8], invalid)) {
      throw ParseError(source, line_no, "invalid integer column");
    }
    row.feature_id = static_cast<FeatureId>(id);
    row.description = std::string(f[1]);
    row.invalid_count = invalid;
    if (const auto a = parse_cell(f[2], source, line_no)) {
      ScoreEstimate est;
      est.point = *a;
      est.ci_lower = parse_cell(f[3], source, line_no).value_or(*a);
      est.ci_upper = parse_cell(f[4], source, line_no).value_or(*a);
      est.m_effective = m;
      row.accuracy = est;
    }
    if (const auto p = parse_cell(f[5], source, line_no)) {
      ScoreEstimate est;
      est.kind = ScoreKind::precision;
      est.point = *p;
      row.precision = est;
    }
    if (const auto r = parse_cell(f[6], source, line_no)) {
      ScoreEstimate est;
      est.kind = ScoreKind::recall;
      est.point = *r;
      row.recall = est;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace discovery
