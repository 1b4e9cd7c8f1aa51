// discover: interpretable discovery from text with k-FWER control.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/inference.hpp"
#include "discovery/pipeline.hpp"
#include "discovery/scoring.hpp"
#include "discovery/simharness.hpp"

namespace {

using namespace discovery;

struct AnalyzeArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> k;
  std::optional<std::size_t> draws;
  std::optional<double> eval_fraction;
  bool mock_llm = false;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

struct ReportArgs {
  std::string inference;
  std::optional<std::string> scores;
  std::optional<std::string> out;
};

int cmd_analyze(const AnalyzeArgs& args) {
  RunConfig config = load_run_config(args.config);
  ConfigOverrides overrides;
  overrides.seed = args.seed;
  overrides.alpha = args.alpha;
  overrides.k = args.k;
  overrides.bootstrap_draws = args.draws;
  overrides.eval_fraction = args.eval_fraction;
  overrides.mock_llm = args.mock_llm;
  overrides.threads = args.threads;
  if (args.out) overrides.output_dir = *args.out;
  apply_overrides(config, overrides);

  const AnalyzeResult result = run_analyze(config);
  const double guide = std::log(static_cast<double>(result.report.p) * static_cast<double>(result.report.n));
  spdlog::info("k guidance: log(p n) = {:.2f}; k well below this keeps the k-max approximation accurate", guide);
  std::cout << result.report.selected.size() << " discoveries among " << result.report.p << " features\n";
  for (const auto& path : result.written) std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_simulate(const SimulateArgs& args) {
  std::vector<GridEntry> grid = load_grid(args.config);
  if (args.seed) {
    for (GridEntry& entry : grid) {
      entry.spec.seed = *args.seed;
      entry.bootstrap.seed = *args.seed;
    }
  }
  const auto results = run_grid(grid, args.threads.value_or(0), [](const GridEntry& entry, std::size_t i, std::size_t n) {
    spdlog::info("spec {}/{} '{}': n={} p={} reps={}", i + 1, n, entry.spec.id, entry.spec.n, entry.spec.p, entry.reps);
  });
  if (args.out) {
    std::ofstream out(*args.out, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + *args.out + "'");
    write_grid_results(results, out);
    std::cout << "wrote " << *args.out << '\n';
  } else {
    write_grid_results(results, std::cout);
  }
  return 0;
}

int cmd_report(const ReportArgs& args) {
  std::ifstream inference_in(args.inference, std::ios::binary);
  if (!inference_in) throw IngestionError("cannot open '" + args.inference + "'");
  const InferenceReport report = read_inference_report(inference_in, args.inference);
  std::vector<ScoreRow> scores;
  if (args.scores) {
    std::ifstream score_in(*args.scores, std::ios::binary);
    if (!score_in) throw IngestionError("cannot open '" + *args.scores + "'");
    scores = read_score_report(score_in, *args.scores);
  }
  const std::vector<PlotRow> rows = plot_rows(report, args.scores ? &scores : nullptr);
  if (args.out) {
    std::ofstream out(*args.out, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + *args.out + "'");
    write_plot_data(rows, out);
  } else {
    write_plot_data(rows, std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("discover"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Interpretable discovery from text data with k-FWER control"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  AnalyzeArgs analyze;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Run the discovery pipeline on a corpus");
  analyze_cmd->add_option("--config", analyze.config, "Run configuration (TOML)")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--seed", analyze.seed, "Seed for the sample split and the bootstrap");
  analyze_cmd->add_option("--alpha", analyze.alpha, "Level of k-FWER control");
  analyze_cmd->add_option("--k", analyze.k, "Tolerated number of false discoveries plus one");
  analyze_cmd->add_option("--bootstrap-draws", analyze.draws, "Multiplier bootstrap draws");
  analyze_cmd->add_option("--eval-fraction", analyze.eval_fraction, "Held-out evaluation fraction");
  analyze_cmd->add_flag("--mock-llm", analyze.mock_llm, "Use the offline mock backend");
  analyze_cmd->add_option("--threads", analyze.threads, "Worker threads (0 = all cores)");
  analyze_cmd->add_option("--out", analyze.out, "Output directory");

  SimulateArgs simulate;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo k-FWER and power over a grid of designs");
  simulate_cmd->add_option("--config", simulate.config, "Grid file (TOML)")->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("--seed", simulate.seed, "Replace every design and bootstrap seed");
  simulate_cmd->add_option("--threads", simulate.threads, "Worker threads (0 = all cores)");
  simulate_cmd->add_option("--out", simulate.out, "Results file (default: stdout)");

  ReportArgs report;
  CLI::App* report_cmd = app.add_subcommand("report", "Plot-ready data for the ranked discoveries");
  report_cmd->add_option("--inference", report.inference, "inference_report.jsonl")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--scores", report.scores, "score_report.tsv")->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report.out, "Output file (default: stdout)");

  CLI11_PARSE(app, argc, argv);
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::err);

  try {
    if (*analyze_cmd) return cmd_analyze(analyze);
    if (*simulate_cmd) return cmd_simulate(simulate);
    if (*report_cmd) return cmd_report(report);
  } catch (const Error& e) {
    std::cerr << "error: category=" << e.category() << " message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: category=internal message=\"" << e.what() << "\"\n";
    return 3;
  }
  return 1;
}
