#pragma once

// k-FWER selection (one-step and step-down) and simultaneous intervals.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "discovery/bootstrap.hpp"
#include "discovery/transforms.hpp"

namespace discovery {

enum class Method { one_step, step_down };

std::string to_string(Method method);
Method parse_method(std::string_view text);

struct InferenceConfig {
  double alpha = 0.05;
  std::size_t k = 1;
  Side side = Side::two_sided;
  Method method = Method::one_step;
  std::size_t max_subset_enumeration = 50000;

  void validate() const;
};

enum class FeatureStatus { tested, untestable };

struct FeatureResult {
  FeatureId feature_id = 0;
  double theta_hat = 0.0;
  std::optional<double> t_stat;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  bool rejected = false;
  FeatureStatus status = FeatureStatus::tested;
};

struct InferenceReport {
  InferenceConfig config;
  std::size_t n = 0;
  std::size_t p = 0;
  bool studentized = true;
  std::size_t bootstrap_draws = 0;
  std::uint64_t bootstrap_seed = 0;
  std::string fingerprint;
  // Feature ids of rejected hypotheses, increasing.
  std::vector<FeatureId> selected;
  // One record per column of the estimates, in column order.
  std::vector<FeatureResult> features;
  // Step 1 is the one-step critical value over every testable feature.
  std::vector<CriticalValue> critical_values;
  bool subset_approximation = false;
  // Free-form settings echoed into the report header.
  std::vector<std::pair<std::string, std::string>> echo;

  std::size_t untestable_count() const;
};

InferenceReport one_step_select(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config);
InferenceReport step_down_select(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config);
// Dispatches on config.method.
InferenceReport select_features(const FeatureEstimates& est, const BootstrapRun& run, const InferenceConfig& config);

// Number of size-r subsets of an m-set, saturating at `cap + 1`.
std::size_t capped_binomial(std::size_t m, std::size_t r, std::size_t cap);

// JSON lines: a header record then one record per feature with fields
// feature_id, theta_hat, t_stat, ci_lower, ci_upper, rejected, status.
void write_inference_report(const InferenceReport& report, std::ostream& out);
InferenceReport read_inference_report(std::istream& in, const std::string& source);

// Discoveries as a three-column table: Feature, estimate, t-stat.
void write_inference_table(const InferenceReport& report, std::ostream& out);

}  // namespace discovery
