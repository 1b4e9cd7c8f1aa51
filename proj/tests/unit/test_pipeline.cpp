#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/pipeline.hpp"

using namespace discovery;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(FIXTURE_DIR) / "ht50";

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

RunConfig fixture_config(const std::string& out_name) {
  RunConfig cfg = load_run_config(kFixture / "config.toml");
  cfg.output_dir = fs::path(SCRATCH_DIR) / out_name;
  fs::remove_all(cfg.output_dir);
  return cfg;
}

InferenceReport report_with(std::vector<std::pair<FeatureId, double>> selected, std::size_t extra_unselected) {
  InferenceReport r;
  r.config.k = 1;
  for (const auto& [id, est] : selected) {
    FeatureResult f;
    f.feature_id = id;
    f.theta_hat = est;
    f.t_stat = est * 10.0;
    f.ci_lower = est - 0.1;
    f.ci_upper = est + 0.1;
    f.rejected = true;
    r.features.push_back(f);
    r.selected.push_back(id);
  }
  for (std::size_t j = 0; j < extra_unselected; ++j) {
    FeatureResult f;
    f.feature_id = static_cast<FeatureId>(1000 + j);
    f.t_stat = 0.0;
    r.features.push_back(f);
  }
  std::sort(r.selected.begin(), r.selected.end());
  r.p = r.features.size();
  return r;
}

}  // namespace

TEST_CASE("run configuration loads with paths relative to the file") {
  const RunConfig cfg = load_run_config(kFixture / "config.toml");
  CHECK(cfg.corpus == kFixture / "corpus.jsonl");
  CHECK(cfg.activations == kFixture / "activations.tsv");
  CHECK(cfg.threshold == 0.1);
  CHECK(cfg.transform.kind == TransformKind::ht_diff_in_means);
  CHECK(cfg.bootstrap.n_draws == 1000);
  CHECK(cfg.split_seed == 20261016);
  CHECK(cfg.bootstrap.seed == 20261016);
  CHECK(cfg.inference.method == Method::one_step);
  CHECK(cfg.autointerp.enabled);
  CHECK(cfg.autointerp.mock_descriptions.at(7) == "references to crime");
  CHECK(cfg.autointerp.mock_keywords.at(3) == std::vector<std::string>{"article"});
  CHECK(cfg.output_dir == kFixture / "out");
}

TEST_CASE("command-line overrides replace configured values") {
  RunConfig cfg = load_run_config(kFixture / "config.toml");
  ConfigOverrides o;
  o.seed = 5;
  o.alpha = 0.1;
  o.k = 2;
  o.bootstrap_draws = 300;
  o.eval_fraction = 0.2;
  o.threads = 3;
  o.output_dir = "elsewhere";
  apply_overrides(cfg, o);
  CHECK(cfg.split_seed == 5);
  CHECK(cfg.bootstrap.seed == 5);
  CHECK(cfg.inference.alpha == 0.1);
  CHECK(cfg.inference.k == 2);
  CHECK(cfg.bootstrap.n_draws == 300);
  CHECK(cfg.eval_fraction == 0.2);
  CHECK(cfg.threads == 3);
  CHECK(cfg.output_dir == "elsewhere");
}

TEST_CASE("malformed run configurations are rejected") {
  const fs::path base = kFixture;
  CHECK_THROWS_AS(parse_run_config("[split]\neval_fraction = 0.1\n", base, "c"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[input]\ncorpus = \"corpus.jsonl\"\nactivations = \"activations.tsv\"\nbogus = 1\n",
                                   base, "c"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config("[input\n", base, "c"), ParseError);
  RunConfig both = parse_run_config(
      "[input]\ncorpus = \"corpus.jsonl\"\nactivations = \"activations.tsv\"\ndictionary = \"activations.tsv\"\n", base,
      "c");
  CHECK_THROWS_AS(both.validate(), ConfigError);
  RunConfig missing = parse_run_config("[input]\ncorpus = \"nope.jsonl\"\nactivations = \"activations.tsv\"\n", base, "c");
  CHECK_THROWS_AS(missing.validate(), ConfigError);
}

TEST_CASE("analyze writes every artifact and is reproducible") {
  const RunConfig a = fixture_config("analyze_a");
  const AnalyzeResult first = run_analyze(a);
  const char* names[] = {"inference_report.jsonl", "inference_table.tsv", "descriptions.jsonl", "score_report.tsv",
                         "discoveries.txt"};
  for (const char* name : names) CHECK(fs::exists(a.output_dir / name));
  CHECK(first.n_total == 50);
  CHECK(first.report.n == 45);
  CHECK(first.descriptions.size() == first.report.selected.size());
  CHECK(first.scores.size() == first.report.selected.size());

  RunConfig b = fixture_config("analyze_b");
  b.threads = 4;
  run_analyze(b);
  for (const char* name : names) CHECK(slurp(a.output_dir / name) == slurp(b.output_dir / name));

  const std::string table = slurp(a.output_dir / "discoveries.txt");
  CHECK(table.rfind("Ranked discoveries: ", 0) == 0);
}

TEST_CASE("analyze without autointerp writes inference outputs only") {
  RunConfig cfg = fixture_config("analyze_plain");
  cfg.autointerp.enabled = false;
  const AnalyzeResult result = run_analyze(cfg);
  CHECK(fs::exists(cfg.output_dir / "inference_report.jsonl"));
  CHECK(fs::exists(cfg.output_dir / "inference_table.tsv"));
  CHECK(fs::exists(cfg.output_dir / "discoveries.txt"));
  CHECK_FALSE(fs::exists(cfg.output_dir / "descriptions.jsonl"));
  CHECK_FALSE(fs::exists(cfg.output_dir / "score_report.tsv"));
  CHECK(result.descriptions.empty());
}

TEST_CASE("k beyond the testable features is an inference error") {
  RunConfig cfg = fixture_config("analyze_bad_k");
  cfg.inference.k = 100000;
  CHECK_THROWS_AS(run_analyze(cfg), InferenceError);
}

TEST_CASE("a dictionary file gives the same discoveries as raw activations") {
  RunConfig raw = fixture_config("analyze_raw");
  raw.autointerp.enabled = false;
  const AnalyzeResult from_raw = run_analyze(raw);

  const Corpus corpus = read_corpus_jsonl(raw.corpus);
  ActivationSummary summary(corpus);
  read_activations_tsv(*raw.activations, summary);
  const fs::path dict = fs::path(SCRATCH_DIR) / "ht50.dict";
  write_dictionary_file(pool_and_binarize(summary, raw.threshold), dict);

  RunConfig via_dict = fixture_config("analyze_dict");
  via_dict.autointerp.enabled = false;
  via_dict.activations.reset();
  via_dict.dictionary = dict;
  const AnalyzeResult from_dict = run_analyze(via_dict);
  CHECK(from_dict.report.selected == from_raw.report.selected);
  CHECK(from_dict.report.fingerprint == from_raw.report.fingerprint);
}

TEST_CASE("plot rows rank discoveries and carry descriptions") {
  const InferenceReport report =
      report_with({{1, 0.1}, {2, 0.5}, {3, 0.3}, {4, 0.3}, {5, -0.2}, {6, 0.9}, {7, 0.0}, {8, 0.4}, {9, 0.2}}, 3);
  std::vector<ScoreRow> scores;
  for (FeatureId id = 1; id <= 8; ++id) {
    ScoreRow row;
    row.feature_id = id;
    row.description = "desc " + std::to_string(id);
    row.accuracy = ScoreEstimate{};
    row.accuracy->point = 0.5;
    scores.push_back(row);
  }
  const auto rows = plot_rows(report, &scores);
  REQUIRE(rows.size() == 9);
  const FeatureId order[] = {6, 2, 8, 3, 4, 9, 1, 7, 5};
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(rows[i].rank == i + 1);
    CHECK(rows[i].feature_id == order[i]);
  }
  CHECK(rows[5].description.empty());
  CHECK_FALSE(rows[5].a_score.has_value());
  CHECK(rows[0].a_score == 0.5);

  std::ostringstream out;
  write_plot_data(rows, out);
  std::istringstream lines(out.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 10);

  std::ostringstream empty;
  write_plot_data(plot_rows(report_with({}, 4), nullptr), empty);
  CHECK(empty.str() == "rank\tfeature_id\testimate\tci_lower\tci_upper\tdescription\ta_score\n");

  ScoreRow stray;
  stray.feature_id = 1000;
  std::vector<ScoreRow> bad = {stray};
  CHECK_THROWS_AS(plot_rows(report, &bad), ValidationError);
}
