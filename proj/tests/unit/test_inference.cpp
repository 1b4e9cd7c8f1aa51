#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/inference.hpp"
#include "fixtures.hpp"
#include "stepdown_oracle.hpp"

using namespace discovery;
using Catch::Matchers::WithinAbs;

namespace {

BootstrapConfig boot(std::size_t draws, std::uint64_t seed, Side side = Side::two_sided) {
  BootstrapConfig cfg;
  cfg.n_draws = draws;
  cfg.seed = seed;
  cfg.side = side;
  cfg.threads = 1;
  return cfg;
}

InferenceConfig infer(std::size_t k, double alpha, Method method, Side side = Side::two_sided) {
  InferenceConfig cfg;
  cfg.k = k;
  cfg.alpha = alpha;
  cfg.method = method;
  cfg.side = side;
  return cfg;
}

// Estimates with given t-stats and a run whose every draw equals `c`, so the
// critical value is exactly c for any k and subset.
struct Stub {
  FeatureEstimates est;
  BootstrapRun run;
};

Stub stub(const std::vector<double>& theta, const std::vector<double>& sigma, std::size_t n, double c) {
  FeatureEstimates est;
  est.n = n;
  est.studentized = true;
  est.fingerprint = "stub";
  for (std::size_t j = 0; j < theta.size(); ++j) {
    est.feature_ids.push_back(static_cast<FeatureId>(j));
    est.theta_hat.push_back(theta[j]);
    est.sigma_hat_diag.push_back(sigma[j]);
    est.t_stats.push_back(std::sqrt(double(n)) * theta[j] / std::sqrt(sigma[j]));
    est.testable.push_back(true);
  }
  std::vector<std::size_t> columns(theta.size());
  std::iota(columns.begin(), columns.end(), std::size_t{0});
  std::vector<double> draws(100 * theta.size(), c);
  return {est, BootstrapRun::from_draws(boot(100, 0), "stub", columns, draws)};
}

std::vector<std::vector<double>> all_draws(const BootstrapRun& run) {
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < run.n_draws(); ++b) out.push_back(run.draw(b));
  return out;
}

}  // namespace

TEST_CASE("one-step selects strictly above a fixed critical value") {
  // t = [3.0, 0.1] with n = 100 and unit variance.
  const Stub s = stub({0.3, 0.01}, {1.0, 1.0}, 100, 1.96);
  const InferenceReport r = one_step_select(s.est, s.run, infer(1, 0.05, Method::one_step));
  CHECK(r.selected == std::vector<FeatureId>{0});
  CHECK(r.features[0].rejected);
  CHECK_FALSE(r.features[1].rejected);
  REQUIRE(r.critical_values.size() == 1);
  CHECK(r.critical_values[0].value == 1.96);
}

TEST_CASE("a statistic equal to the critical value is not rejected") {
  const Stub s = stub({0.2}, {1.0}, 100, 2.0);
  const InferenceReport r = one_step_select(s.est, s.run, infer(1, 0.05, Method::one_step));
  CHECK(s.est.t_stats[0] == 2.0);
  CHECK(r.selected.empty());
}

TEST_CASE("simultaneous interval arithmetic") {
  const Stub s = stub({0.1}, {0.25}, 100, 2.0);
  const InferenceReport r = one_step_select(s.est, s.run, infer(1, 0.05, Method::one_step));
  CHECK_THAT(*r.features[0].ci_lower, WithinAbs(0.0, 1e-15));
  CHECK_THAT(*r.features[0].ci_upper, WithinAbs(0.2, 1e-15));
}

TEST_CASE("every estimate lies inside its interval") {
  const TransformedMatrix x = fixtures::random_indicators(1, 200, 20);
  const FeatureEstimates est = estimate_features(x, true);
  const BootstrapRun run = run_bootstrap(x, est, boot(500, 3));
  for (const FeatureResult& f : one_step_select(est, run, infer(1, 0.05, Method::one_step)).features) {
    CHECK(*f.ci_lower <= f.theta_hat);
    CHECK(f.theta_hat <= *f.ci_upper);
  }
}

TEST_CASE("rejection is equivalent to zero lying outside the interval") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TransformedMatrix x = fixtures::random_signed(seed, 60, 15, 0.6);
    const FeatureEstimates est = estimate_features(x, true);
    const BootstrapRun run = run_bootstrap(x, est, boot(200, seed));
    for (std::size_t k : {1u, 2u, 4u}) {
      const InferenceReport r = one_step_select(est, run, infer(k, 0.05, Method::one_step));
      for (const FeatureResult& f : r.features) {
        const bool outside = *f.ci_lower > 0.0 || *f.ci_upper < 0.0;
        CHECK(f.rejected == outside);
      }
    }
  }
}

TEST_CASE("step-down matches the exhaustive-subset oracle") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const std::size_t p = 4 + seed % 7;
    const TransformedMatrix x = fixtures::random_signed(100 + seed, 40, p, 0.5);
    const FeatureEstimates est = estimate_features(x, true);
    for (Side side : {Side::two_sided, Side::one_sided}) {
      const BootstrapRun run = run_bootstrap(x, est, boot(200, seed, side));
      const auto draws = all_draws(run);
      for (std::size_t k = 1; k <= 3; ++k) {
        for (int alpha : {5, 10}) {
          const InferenceReport r = step_down_select(est, run, infer(k, alpha / 100.0, Method::step_down, side));
          const oracle::StepDownResult o = oracle::step_down(draws, est.t_stats, k, side == Side::two_sided, alpha);
          REQUIRE(r.critical_values.size() == o.step_values.size());
          for (std::size_t s = 0; s < o.step_values.size(); ++s) CHECK(r.critical_values[s].value == o.step_values[s]);
          for (std::size_t j = 0; j < p; ++j) CHECK(r.features[j].rejected == o.rejected[j]);
          CHECK_FALSE(r.subset_approximation);
        }
      }
    }
  }
}

TEST_CASE("step-down contains one-step and its critical values never increase") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TransformedMatrix x = fixtures::random_signed(seed, 80, 30, 0.4);
    const FeatureEstimates est = estimate_features(x, true);
    const BootstrapRun run = run_bootstrap(x, est, boot(300, seed));
    for (std::size_t k : {1u, 2u, 3u}) {
      const InferenceReport one = one_step_select(est, run, infer(k, 0.05, Method::one_step));
      const InferenceReport down = step_down_select(est, run, infer(k, 0.05, Method::step_down));
      CHECK(std::includes(down.selected.begin(), down.selected.end(), one.selected.begin(), one.selected.end()));
      CHECK(down.critical_values.front().value == one.critical_values.front().value);
      for (std::size_t s = 1; s < down.critical_values.size(); ++s) {
        CHECK(down.critical_values[s].value <= down.critical_values[s - 1].value);
      }
    }
  }
}

TEST_CASE("subset fallback is flagged when enumeration exceeds the cap") {
  // Six strong columns and six nulls, so step 2 has C(6, 2) = 15 subsets.
  const TransformedMatrix base = fixtures::random_signed(5, 80, 12, 0.0);
  std::vector<double> dense(80 * 12);
  for (std::size_t j = 0; j < 12; ++j) {
    for (std::size_t i = 0; i < 80; ++i) dense[j * 80 + i] = base.at(i, j) + (j < 6 ? 2.0 : 0.0);
  }
  const TransformedMatrix x = TransformedMatrix::from_dense(80, base.feature_ids(), dense);
  const FeatureEstimates est = estimate_features(x, true);
  const BootstrapRun run = run_bootstrap(x, est, boot(200, 1));
  InferenceConfig cfg = infer(3, 0.05, Method::step_down);
  const InferenceReport exact = step_down_select(est, run, cfg);
  REQUIRE(exact.selected.size() >= 6);
  REQUIRE(exact.critical_values.size() >= 2);
  CHECK_FALSE(exact.subset_approximation);
  cfg.max_subset_enumeration = 1;
  const InferenceReport approx = step_down_select(est, run, cfg);
  CHECK(approx.subset_approximation);
  CHECK(capped_binomial(10, 3, 1000) == 120);
  CHECK(capped_binomial(60, 30, 50000) == 50001);
  CHECK(capped_binomial(5, 0, 10) == 1);
}

TEST_CASE("permuting features permutes the report") {
  const std::size_t n = 70;
  const std::size_t p = 9;
  const TransformedMatrix x = fixtures::random_signed(17, n, p, 0.5);
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 gen(2);
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<double> dense(n * p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) dense[perm[j] * n + i] = x.at(i, j);
  }
  const TransformedMatrix y = TransformedMatrix::from_dense(n, x.feature_ids(), dense);
  for (Method method : {Method::one_step, Method::step_down}) {
    const FeatureEstimates ex = estimate_features(x, true);
    const FeatureEstimates ey = estimate_features(y, true);
    const InferenceReport rx = select_features(ex, run_bootstrap(x, ex, boot(200, 4)), infer(2, 0.1, method));
    const InferenceReport ry = select_features(ey, run_bootstrap(y, ey, boot(200, 4)), infer(2, 0.1, method));
    for (std::size_t j = 0; j < p; ++j) {
      CHECK(rx.features[j].rejected == ry.features[perm[j]].rejected);
      CHECK(rx.features[j].ci_lower == ry.features[perm[j]].ci_lower);
    }
  }
}

TEST_CASE("untestable features are reported without statistics") {
  std::vector<double> dense = {1, 1, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1};
  const TransformedMatrix x = TransformedMatrix::from_dense(4, {3, 8, 9}, dense);
  const FeatureEstimates est = estimate_features(x, true);
  const BootstrapRun run = run_bootstrap(x, est, boot(100, 1));
  const InferenceReport r = one_step_select(est, run, infer(1, 0.05, Method::one_step));
  CHECK(r.features[0].status == FeatureStatus::untestable);
  CHECK_FALSE(r.features[0].t_stat.has_value());
  CHECK_FALSE(r.features[0].ci_lower.has_value());
  CHECK_FALSE(r.features[0].rejected);
  CHECK(r.untestable_count() == 1);
  CHECK_THROWS_AS(one_step_select(est, run, infer(3, 0.05, Method::one_step)), InferenceError);
}

TEST_CASE("one-sided runs carry no intervals") {
  const TransformedMatrix x = fixtures::random_signed(3, 50, 5, 0.5);
  const FeatureEstimates est = estimate_features(x, true);
  const BootstrapRun run = run_bootstrap(x, est, boot(100, 1, Side::one_sided));
  const InferenceReport r = one_step_select(est, run, infer(1, 0.05, Method::one_step, Side::one_sided));
  for (const FeatureResult& f : r.features) CHECK_FALSE(f.ci_lower.has_value());
  CHECK_THROWS_AS(one_step_select(est, run, infer(1, 0.05, Method::one_step)), InferenceError);
}

TEST_CASE("mismatched estimates are refused") {
  const TransformedMatrix x = fixtures::random_signed(3, 50, 5, 0.5);
  const TransformedMatrix y = fixtures::random_signed(4, 50, 5, 0.5);
  const FeatureEstimates ex = estimate_features(x, true);
  const FeatureEstimates ey = estimate_features(y, true);
  const BootstrapRun run = run_bootstrap(x, ex, boot(100, 1));
  CHECK_THROWS_AS(one_step_select(ey, run, infer(1, 0.05, Method::one_step)), InferenceError);
  InferenceConfig bad = infer(0, 0.05, Method::one_step);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("inference report round-trips through JSON lines") {
  std::vector<double> dense = {1, 1, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 0, 0, 1};
  const TransformedMatrix x = TransformedMatrix::from_dense(4, {3, 8, 9, 12}, dense);
  const FeatureEstimates est = estimate_features(x, true);
  const BootstrapRun run = run_bootstrap(x, est, boot(100, 1));
  InferenceReport r = step_down_select(est, run, infer(1, 0.5, Method::step_down));
  r.echo = {{"transform", "mean"}};
  std::ostringstream out;
  write_inference_report(r, out);
  std::istringstream in(out.str());
  const InferenceReport back = read_inference_report(in, "report");
  CHECK(back.selected == r.selected);
  CHECK(back.n == r.n);
  CHECK(back.config.k == r.config.k);
  CHECK(back.config.method == r.config.method);
  REQUIRE(back.features.size() == r.features.size());
  for (std::size_t j = 0; j < r.features.size(); ++j) {
    CHECK(back.features[j].feature_id == r.features[j].feature_id);
    CHECK(back.features[j].theta_hat == r.features[j].theta_hat);
    CHECK(back.features[j].ci_upper == r.features[j].ci_upper);
    CHECK(back.features[j].status == r.features[j].status);
  }
  std::ostringstream again;
  write_inference_report(back, again);
  CHECK(again.str() == out.str());

  std::istringstream first_line(out.str());
  std::string header;
  std::getline(first_line, header);
  std::string record;
  std::getline(first_line, record);
  CHECK(record.rfind("{\"feature_id\":3,\"theta_hat\":1.0,\"t_stat\":null,\"ci_lower\":null,\"ci_upper\":null,", 0) == 0);
}

TEST_CASE("discovery table lists rejected features") {
  const Stub s = stub({0.3, 0.01, -0.5}, {1.0, 1.0, 1.0}, 100, 1.96);
  const InferenceReport r = one_step_select(s.est, s.run, infer(1, 0.05, Method::one_step));
  std::ostringstream out;
  write_inference_table(r, out);
  CHECK(out.str() == "Feature\testimate\tt-stat\n0\t0.3000\t3.000\n2\t-0.5000\t-5.000\n");
}
