#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/scoring.hpp"

using namespace discovery;
using Catch::Matchers::WithinAbs;

namespace {

EvalTable table_from(const std::vector<std::pair<int, int>>& labels) {
  EvalTable t;
  t.feature_id = 5;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    t.rows.push_back({"d" + std::to_string(i), labels[i].first, labels[i].second});
  }
  return t;
}

EvalTable agreement_table(std::size_t m, std::size_t agree) {
  std::vector<std::pair<int, int>> labels;
  for (std::size_t i = 0; i < m; ++i) labels.push_back({1, i < agree ? 1 : 0});
  return table_from(labels);
}

}  // namespace

TEST_CASE("A-score is the agreement rate") {
  CHECK(a_score(agreement_table(10, 10)).point == 1.0);
  CHECK_THAT(a_score(agreement_table(10, 7)).point, WithinAbs(0.7, 1e-15));
  CHECK_THROWS_AS(a_score(EvalTable{}), ValidationError);
}

TEST_CASE("Wald interval arithmetic") {
  const ScoreEstimate est = a_score(agreement_table(100, 80), 0.05, IntervalMethod::wald);
  const double half = 1.959963984540054 * std::sqrt(0.16 / 100.0);
  CHECK_THAT(est.ci_lower, WithinAbs(0.8 - half, 1e-12));
  CHECK_THAT(est.ci_upper, WithinAbs(0.8 + half, 1e-12));
  CHECK_THAT(est.ci_lower, WithinAbs(0.7216, 5e-5));
  CHECK_THAT(est.ci_upper, WithinAbs(0.8784, 5e-5));
}

TEST_CASE("arcsine interval arithmetic") {
  const ScoreEstimate est = a_score(agreement_table(100, 80), 0.05, IntervalMethod::arcsine);
  const double g = std::asin(std::sqrt(0.8));
  const double half = 1.959963984540054 / (2.0 * 10.0);
  CHECK_THAT(est.ci_lower, WithinAbs(std::pow(std::sin(g - half), 2), 1e-12));
  CHECK_THAT(est.ci_upper, WithinAbs(std::pow(std::sin(g + half), 2), 1e-12));
}

TEST_CASE("intervals contain the point and stay inside [0, 1]") {
  for (IntervalMethod method : {IntervalMethod::arcsine, IntervalMethod::wald}) {
    for (std::size_t m : {1u, 2u, 7u, 50u, 200u}) {
      for (std::size_t agree = 0; agree <= m; ++agree) {
        const ScoreEstimate est = a_score(agreement_table(m, agree), 0.05, method);
        CHECK(0.0 <= est.ci_lower);
        CHECK(est.ci_lower <= est.point);
        CHECK(est.point <= est.ci_upper);
        CHECK(est.ci_upper <= 1.0);
      }
    }
  }
}

TEST_CASE("A-score is invariant to row order") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<int, int>> labels;
    for (int i = 0; i < 40; ++i) labels.push_back({int(gen() % 2), int(gen() % 2)});
    const ScoreEstimate a = a_score(table_from(labels));
    std::shuffle(labels.begin(), labels.end(), gen);
    const ScoreEstimate b = a_score(table_from(labels));
    CHECK(a.point == b.point);
    CHECK(a.ci_lower == b.ci_lower);
  }
}

TEST_CASE("precision and recall from counts") {
  // TP=3, FP=1, FN=1, TN=2
  const EvalTable t = table_from({{1, 1}, {1, 1}, {1, 1}, {0, 1}, {1, 0}, {0, 0}, {0, 0}});
  CHECK(p_score(t).point == 0.75);
  CHECK(r_score(t).point == 0.75);
  CHECK(p_score(t).denominator == 4);
  CHECK(p_score(t).m_effective == 7);
}

TEST_CASE("empty denominators leave P or R undefined") {
  const EvalTable t = table_from({{1, 0}, {0, 0}, {1, 0}});
  CHECK(p_score(t).undefined);
  CHECK_FALSE(r_score(t).undefined);
  CHECK(r_score(t).point == 0.0);
  const EvalTable none = table_from({{0, 1}, {0, 0}});
  CHECK(r_score(none).undefined);
}

TEST_CASE("perfect prediction scores 1 everywhere") {
  const EvalTable t = table_from({{1, 1}, {0, 0}, {1, 1}, {0, 0}});
  CHECK(a_score(t).point == 1.0);
  CHECK(p_score(t).point == 1.0);
  CHECK(r_score(t).point == 1.0);
}

TEST_CASE("an oracle classifier's A-score bounds any other classifier's") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<int, int>> noisy;
    std::vector<std::pair<int, int>> oracle;
    for (int i = 0; i < 30; ++i) {
      const int y = int(gen() % 2);
      noisy.push_back({y, int(gen() % 2)});
      oracle.push_back({y, y});
    }
    CHECK(a_score(table_from(noisy)).point <= a_score(table_from(oracle)).point);
  }
}

TEST_CASE("duplicate documents and bad labels are rejected") {
  EvalTable t = table_from({{1, 1}, {0, 0}});
  t.rows[1].doc_id = t.rows[0].doc_id;
  CHECK_THROWS_AS(a_score(t), ValidationError);
  EvalTable u = table_from({{1, 2}});
  CHECK_THROWS_AS(a_score(u), ValidationError);
}

TEST_CASE("score report round-trips") {
  EvalTable t = table_from({{1, 1}, {1, 0}, {0, 0}, {0, 0}});
  t.invalid_count = 2;
  std::vector<ScoreRow> rows = {score_table(t, "mentions of\tcourts", 0.05, IntervalMethod::arcsine)};
  EvalTable none;
  none.feature_id = 9;
  rows.push_back(score_table(none, "", 0.05, IntervalMethod::arcsine));
  std::ostringstream out;
  write_score_report(rows, out);
  const std::string text = out.str();
  CHECK(text.rfind("feature_id\tdescription\ta_score\ta_ci_lower\ta_ci_upper\tp_score\tr_score\tm_effective\tinvalid_count\n",
                   0) == 0);
  CHECK(text.find("5\tmentions of courts\t0.7500\t") != std::string::npos);
  CHECK(text.find("9\t\tNA\tNA\tNA\tNA\tNA\t0\t0\n") != std::string::npos);
  std::istringstream in(text);
  const auto back = read_score_report(in, "scores");
  REQUIRE(back.size() == 2);
  CHECK(back[0].invalid_count == 2);
  CHECK(back[0].accuracy->point == 0.75);
  CHECK(back[0].precision->point == 1.0);
  CHECK_FALSE(back[1].accuracy.has_value());
}
