#pragma once

// End-to-end workflows behind the command-line tool: run configuration,
// the analyze pipeline, and plot-data export.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "discovery/autointerp.hpp"
#include "discovery/bootstrap.hpp"
#include "discovery/inference.hpp"
#include "discovery/llm_backend.hpp"
#include "discovery/scoring.hpp"
#include "discovery/transforms.hpp"

namespace discovery {

struct AutointerpSettings {
  bool enabled = false;
  std::size_t exemplars = 20;
  LlmBackendConfig backend;
  MockRule mock_rule = MockRule::keyword;
  int mock_constant = 0;
  std::map<FeatureId, std::string> mock_descriptions;
  std::map<FeatureId, std::vector<std::string>> mock_keywords;
  double score_alpha = 0.05;
  IntervalMethod interval = IntervalMethod::arcsine;
};

struct RunConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> activations;
  std::optional<std::filesystem::path> dictionary;
  double threshold = 0.0;
  TransformSpec transform;
  double eval_fraction = 0.10;
  std::uint64_t split_seed = 0;
  BootstrapConfig bootstrap;
  InferenceConfig inference;
  AutointerpSettings autointerp;
  std::filesystem::path output_dir = "out";
  unsigned threads = 0;

  // Checks value ranges and that every input path exists.
  void validate() const;
};

// TOML run configuration; relative paths resolve against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir, const std::string& source);

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> k;
  std::optional<std::size_t> bootstrap_draws;
  std::optional<double> eval_fraction;
  bool mock_llm = false;
  std::optional<unsigned> threads;
  std::optional<std::filesystem::path> output_dir;
};

// --seed sets both the split seed and the bootstrap seed.
void apply_overrides(RunConfig& config, const ConfigOverrides& overrides);

struct AnalyzeResult {
  InferenceReport report;
  std::vector<Description> descriptions;
  std::vector<ScoreRow> scores;
  std::vector<std::filesystem::path> written;
  std::size_t n_total = 0;
};

// Split, binarize, filter, transform, estimate, bootstrap, select, then
// optionally describe and score the discoveries. Writes inference_report.jsonl,
// inference_table.tsv and discoveries.txt, plus descriptions.jsonl and
// score_report.tsv when autointerp runs. `backend` replaces the configured
// backend when given.
AnalyzeResult run_analyze(const RunConfig& config, std::shared_ptr<LlmBackend> backend = nullptr);

struct PlotRow {
  std::size_t rank = 0;
  FeatureId feature_id = 0;
  double estimate = 0.0;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  std::string description;
  std::optional<double> a_score;
};

// One row per discovery, ranked by estimate (largest first, ties by id).
// Throws ValidationError when the score report names a feature that is not a
// discovery of the inference report.
std::vector<PlotRow> plot_rows(const InferenceReport& report, const std::vector<ScoreRow>* scores);
void write_plot_data(const std::vector<PlotRow>& rows, std::ostream& out);

// Aligned text table of the discoveries, ranked by estimate.
void write_discovery_table(const InferenceReport& report, const std::vector<ScoreRow>* scores, std::ostream& out);

}  // namespace discovery
