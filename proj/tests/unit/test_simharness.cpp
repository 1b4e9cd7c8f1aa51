#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/simharness.hpp"

using namespace discovery;
using Catch::Matchers::WithinAbs;

namespace {

DgpSpec null_spec(std::size_t n, std::size_t p, std::uint64_t seed) {
  DgpSpec spec;
  spec.id = "null";
  spec.n = n;
  spec.p = p;
  spec.sparsity = {0.2};
  spec.seed = seed;
  return spec;
}

BootstrapConfig boot(std::size_t draws, std::uint64_t seed) {
  BootstrapConfig cfg;
  cfg.n_draws = draws;
  cfg.seed = seed;
  cfg.threads = 1;
  return cfg;
}

InferenceConfig infer(std::size_t k, double alpha) {
  InferenceConfig cfg;
  cfg.k = k;
  cfg.alpha = alpha;
  return cfg;
}

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
double big_phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Correlation of two copula indicators with common activation rate s, by
// quadrature over the shared factor.
double copula_indicator_correlation(double s, double rho) {
  double lo = -1.0, hi = 1.0;  // tau solves 1 - Phi(tau) = s
  lo = -10.0;
  hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (1.0 - big_phi(mid) > s ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  const double h = 1e-3;
  double both = 0.0;
  for (double g = -9.0; g <= 9.0; g += h) {
    const double on = 1.0 - big_phi((tau - std::sqrt(rho) * g) / std::sqrt(1.0 - rho));
    both += on * on * phi(g) * h;
  }
  return (both - s * s) / (s * (1.0 - s));
}

}  // namespace

TEST_CASE("datasets are deterministic in (seed, rep)") {
  const DgpSpec spec = null_spec(100, 30, 5);
  const SimDataset a = simulate_dataset(spec, 3);
  const SimDataset b = simulate_dataset(spec, 3);
  const SimDataset c = simulate_dataset(spec, 4);
  CHECK(a.y == b.y);
  CHECK(a.w == b.w);
  CHECK_FALSE(a.y == c.y);
}

TEST_CASE("equicorrelated with rho 0 reproduces the independent stream") {
  DgpSpec a = null_spec(200, 20, 9);
  DgpSpec b = a;
  b.correlation.kind = CorrelationKind::equicorrelated;
  b.correlation.rho = 0.0;
  CHECK(simulate_dataset(a, 0).y == simulate_dataset(b, 0).y);
}

TEST_CASE("column means match the activation probability") {
  DgpSpec spec = null_spec(20000, 6, 1);
  spec.sparsity = {0.1};
  const SimDataset data = simulate_dataset(spec, 0);
  std::vector<std::size_t> all(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) all[i] = i;
  const double se = std::sqrt(0.1 * 0.9 / double(spec.n));
  for (std::size_t count : data.y.column_counts(all)) {
    CHECK(std::fabs(double(count) / double(spec.n) - 0.1) < 4.0 * se);
  }
}

TEST_CASE("planted effects shift treated and control rates") {
  DgpSpec spec = null_spec(40000, 3, 2);
  spec.sparsity = {0.3};
  spec.effects = {{1, 0.25}};
  spec.pi = 0.4;
  const SimDataset data = simulate_dataset(spec, 0);
  double treated = 0, control = 0, on_t = 0, on_c = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const bool on = data.y.at(i, 1);
    if (data.w[i] == 1.0) {
      ++treated;
      on_t += on;
    } else {
      ++control;
      on_c += on;
    }
  }
  CHECK(std::fabs(treated / double(spec.n) - 0.4) < 4.0 * std::sqrt(0.24 / double(spec.n)));
  const double p1 = 0.3 + 0.6 * 0.25;
  const double p0 = 0.3 - 0.4 * 0.25;
  CHECK(std::fabs(on_t / treated - p1) < 4.0 * std::sqrt(p1 * (1 - p1) / treated));
  CHECK(std::fabs(on_c / control - p0) < 4.0 * std::sqrt(p0 * (1 - p0) / control));
  CHECK(data.theta == std::vector<double>{0.0, 0.25, 0.0});
  CHECK(data.is_null == std::vector<char>{1, 0, 1});
}

TEST_CASE("invalid designs are rejected") {
  DgpSpec spec = null_spec(100, 5, 0);
  spec.sparsity = {0.1};
  spec.effects = {{0, 0.5}};  // control rate 0.1 - 0.25 < 0
  CHECK_THROWS_AS(simulate_dataset(spec, 0), ValidationError);
  spec.effects = {{0, 0.1}, {1, 0.1}, {2, 0.1}, {3, 0.1}, {4, 0.1}};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.effects.clear();
  spec.kind = TransformKind::mean;
  spec.effects = {{0, 0.05}};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.effects.clear();
  spec.sparsity = {1.0};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.sparsity = {0.1, 0.2};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("simulated correlation matches the copula") {
  DgpSpec spec = null_spec(10, 4, 3);
  spec.kind = TransformKind::mean;
  spec.sparsity = {0.2};
  spec.correlation.kind = CorrelationKind::block;
  spec.correlation.rho = 0.5;
  spec.correlation.block_size = 2;
  const std::vector<double> corr = simulated_correlation(spec, 400000, 1);
  const double within = copula_indicator_correlation(0.2, 0.5);
  CHECK_THAT(corr[0 * 4 + 1], WithinAbs(within, 0.01));
  CHECK_THAT(corr[2 * 4 + 3], WithinAbs(within, 0.01));
  CHECK_THAT(corr[0 * 4 + 2], WithinAbs(0.0, 0.01));
  CHECK(corr[0] == 1.0);
  CHECK(simulated_correlation(spec, 50000, 1) == simulated_correlation(spec, 50000, 3));
}

TEST_CASE("binomial standard error") {
  CHECK(binomial_standard_error(0.05, 1000) == std::sqrt(0.05 * 0.95 / 1000.0));
  CHECK(binomial_standard_error(0.0, 100) == 0.0);
}

TEST_CASE("two-sample KS distance") {
  CHECK_THAT(ks_two_sample({1, 2, 3}, {2, 3, 4}), WithinAbs(1.0 / 3.0, 1e-15));
  CHECK(ks_two_sample({1, 2}, {1, 2}) == 0.0);
  CHECK(ks_two_sample({0, 0}, {1, 1}) == 1.0);
}

TEST_CASE("Gaussian k-max of one coordinate is standard normal") {
  const std::vector<double> corr = {1.0};
  const auto draws = gaussian_kmax_sample(corr, 1, 1, Side::one_sided, 100000, 4, 1);
  double sum = 0, below = 0;
  for (double d : draws) {
    sum += d;
    below += d <= 1.0;
  }
  CHECK(std::fabs(sum / 1e5) < 5.0 / std::sqrt(1e5));
  CHECK(std::fabs(below / 1e5 - big_phi(1.0)) < 5.0 * std::sqrt(0.84 * 0.16 / 1e5));
}

TEST_CASE("Monte Carlo k-FWER is reproducible and coherent") {
  const DgpSpec spec = null_spec(150, 40, 11);
  const std::vector<InferenceConfig> configs = {infer(1, 0.01), infer(1, 0.10), infer(5, 0.10)};
  const auto a = estimate_k_fwer(spec, configs, boot(200, 3), 100, 1);
  const auto b = estimate_k_fwer(spec, configs, boot(200, 3), 100, 2);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    CHECK(a[c].empirical_k_fwer == b[c].empirical_k_fwer);
    CHECK(a[c].selected_counts == b[c].selected_counts);
    CHECK(a[c].empirical_k_fwer >= 0.0);
    CHECK(a[c].empirical_k_fwer <= 1.0);
    CHECK(a[c].mc_standard_error == binomial_standard_error(a[c].empirical_k_fwer, 100));
  }
  CHECK(a[0].empirical_k_fwer <= a[1].empirical_k_fwer + 4.0 * a[1].mc_standard_error);
  for (std::size_t rep = 0; rep < 100; ++rep) CHECK(a[2].selected_counts[rep] >= a[1].selected_counts[rep]);
  CHECK_THROWS_AS(estimate_k_fwer(spec, infer(1, 0.05), boot(200, 3), 99, 1), ConfigError);
}

TEST_CASE("coverage studies report rates") {
  const CoverageResult r = accuracy_coverage(0.8, 200, 200, 0.05, IntervalMethod::arcsine, 1);
  CHECK(r.defined == 200);
  CHECK(r.coverage > 0.85);
  CHECK(r.coverage <= 1.0);
  const CoverageResult p = precision_coverage(0.5, 0.5, 0.4, 200, 100, 0.05, IntervalMethod::arcsine, 2);
  CHECK(p.defined == 100);
  CHECK_THROWS_AS(recall_coverage(0.3, 0.2, 0.25, 50, 10, 0.05, IntervalMethod::arcsine, 1), ConfigError);
}

TEST_CASE("grid files parse and report") {
  const std::string text = R"(
[[spec]]
id = "tiny"
n = 120
p = 30
sparsity = 0.2
correlation = "equicorrelated"
rho = 0.1
seed = 4
effects = [[0, 0.3]]
sparsity_overrides = [[0, 0.3]]
reps = 100
bootstrap_draws = 200
alphas = [0.05, 0.1]
ks = [1, 2]
)";
  const auto grid = parse_grid(text, "grid");
  REQUIRE(grid.size() == 1);
  CHECK(grid[0].configs.size() == 4);
  CHECK(grid[0].spec.sparsity_of(0) == 0.3);
  CHECK(grid[0].spec.sparsity_of(1) == 0.2);
  const auto results = run_grid(grid, 1);
  std::ostringstream out;
  write_grid_results(results, out);
  const auto again = run_grid(grid, 1);
  std::ostringstream out2;
  write_grid_results(again, out2);
  CHECK(out.str() == out2.str());
  CHECK(out.str().rfind("spec_id\talpha\tk\tmethod\treps\tempirical_k_fwer\tse\tmean_selected\tpower\n", 0) == 0);
  CHECK(out.str().find("tiny\t0.05\t1\tone_step\t100\t") != std::string::npos);

  CHECK_THROWS_AS(parse_grid("", "empty"), ConfigError);
  CHECK_THROWS_AS(parse_grid("[[spec]]\nid=\"x\"\nn=10\np=5\nbogus=1\n", "bad"), ConfigError);
  CHECK_THROWS_AS(parse_grid("[[spec]\n", "broken"), ParseError);
  CHECK_NOTHROW(load_grid(std::string(DATA_DIR) + "/null_grid.toml"));
}
