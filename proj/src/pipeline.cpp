#include "discovery/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <toml.hpp>
#include <unordered_map>

#include "discovery/data_model.hpp"
#include "discovery/error.hpp"
#include "discovery/parallel.hpp"
#include "discovery/tsv.hpp"

namespace discovery {

namespace fs = std::filesystem;

// ---- configuration --------------------------------------------------------

void RunConfig::validate() const {
  if (corpus.empty()) throw ConfigError("config needs input.corpus");
  if (!fs::exists(corpus)) throw ConfigError("corpus file '" + corpus.string() + "' does not exist");
  if (activations.has_value() == dictionary.has_value()) {
    throw ConfigError("config needs exactly one of input.activations and input.dictionary");
  }
  const fs::path& features = activations ? *activations : *dictionary;
  if (!fs::exists(features)) throw ConfigError("input file '" + features.string() + "' does not exist");
  if (!std::isfinite(threshold)) throw ConfigError("threshold must be finite");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw ConfigError("eval fraction must lie in (0, 1)");
  if (transform.kind == TransformKind::ht_diff_in_means && !(transform.pi > 0.0 && transform.pi < 1.0)) {
    throw ConfigError("pi must lie in (0, 1)");
  }
  bootstrap.validate();
  inference.validate();
  if (bootstrap.side != inference.side) throw ConfigError("bootstrap and inference sides differ");
  if (autointerp.enabled) {
    if (!activations) throw ConfigError("autointerp needs token activations, not a dictionary file");
    if (autointerp.exemplars < 1) throw ConfigError("autointerp.exemplars must be at least 1");
    if (!(autointerp.score_alpha > 0.0 && autointerp.score_alpha < 1.0)) {
      throw ConfigError("autointerp.score_alpha must lie in (0, 1)");
    }
    autointerp.backend.validate();
  }
  if (output_dir.empty()) throw ConfigError("config needs an output directory");
}

namespace {

void check_keys(const toml::table& table, std::initializer_list<std::string_view> known, const std::string& where) {
  for (const auto& [key, value] : table) {
    if (std::find(known.begin(), known.end(), key.str()) == known.end()) {
      throw ConfigError(where + ": unknown key '" + std::string(key.str()) + "'");
    }
  }
}

const toml::table* section(const toml::table& root, std::string_view name, const std::string& source) {
  const toml::node* node = root.get(name);
  if (!node) return nullptr;
  const toml::table* table = node->as_table();
  if (!table) throw ConfigError(source + ": [" + std::string(name) + "] must be a table");
  return table;
}

template <typename T>
T get_or(const toml::table* table, std::string_view key, T fallback, const std::string& where) {
  if (!table) return fallback;
  const toml::node* node = table->get(key);
  if (!node) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    if (const auto value = node->value<double>()) return *value;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (node->is_boolean()) return *node->value<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (node->is_string()) return *node->value<std::string>();
  } else {
    if (node->is_integer()) {
      const std::int64_t value = *node->value<std::int64_t>();
      if (value < 0) throw ConfigError(where + ": '" + std::string(key) + "' must not be negative");
      return static_cast<T>(value);
    }
  }
  throw ConfigError(where + ": '" + std::string(key) + "' has the wrong type");
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path path(value);
  return path.is_absolute() ? path : base / path;
}

FeatureId feature_key(std::string_view key, const std::string& where) {
  unsigned long long id = 0;
  if (!tsv::parse_u64(key, id) || id > 0xFFFFFFFFull) {
    throw ConfigError(where + ": '" + std::string(key) + "' is not a feature id");
  }
  return static_cast<FeatureId>(id);
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ParseError(source, e.source().begin.line, std::string(e.description()));
  }
  check_keys(root, {"seed", "threads", "input", "transform", "split", "bootstrap", "inference", "autointerp", "output"},
             source);
  RunConfig config;
  const std::uint64_t seed = get_or<std::uint64_t>(&root, "seed", 0, source);
  config.threads = get_or<unsigned>(&root, "threads", 0, source);

  const toml::table* input = section(root, "input", source);
  if (!input) throw ConfigError(source + ": missing [input] section");
  check_keys(*input, {"corpus", "activations", "dictionary", "threshold"}, source + " [input]");
  config.corpus = resolve(base_dir, get_or<std::string>(input, "corpus", "", source));
  if (input->contains("activations")) {
    config.activations = resolve(base_dir, get_or<std::string>(input, "activations", "", source));
  }
  if (input->contains("dictionary")) {
    config.dictionary = resolve(base_dir, get_or<std::string>(input, "dictionary", "", source));
  }
  config.threshold = get_or<double>(input, "threshold", 0.0, source);

  const toml::table* transform = section(root, "transform", source);
  if (transform) check_keys(*transform, {"kind", "pi", "pi_source"}, source + " [transform]");
  config.transform.kind = parse_transform_kind(get_or<std::string>(transform, "kind", "mean", source));
  config.transform.pi = get_or<double>(transform, "pi", 0.5, source);
  const std::string pi_source = get_or<std::string>(transform, "pi_source", "fixed", source);
  if (pi_source == "fixed") {
    config.transform.pi_source = PiSource::fixed;
  } else if (pi_source == "estimated") {
    config.transform.pi_source = PiSource::estimated;
  } else {
    throw ConfigError(source + ": unknown pi_source '" + pi_source + "'");
  }

  const toml::table* split = section(root, "split", source);
  if (split) check_keys(*split, {"eval_fraction", "seed"}, source + " [split]");
  config.eval_fraction = get_or<double>(split, "eval_fraction", 0.10, source);
  config.split_seed = get_or<std::uint64_t>(split, "seed", seed, source);

  const toml::table* boot = section(root, "bootstrap", source);
  if (boot) {
    check_keys(*boot, {"draws", "seed", "studentize", "retention", "memory_budget_mb"}, source + " [bootstrap]");
  }
  config.bootstrap.n_draws = get_or<std::size_t>(boot, "draws", 1000, source);
  config.bootstrap.seed = get_or<std::uint64_t>(boot, "seed", seed, source);
  config.bootstrap.studentize = get_or<bool>(boot, "studentize", true, source);
  config.bootstrap.retention = parse_retention(get_or<std::string>(boot, "retention", "in_memory", source));
  config.bootstrap.memory_budget_bytes = get_or<std::size_t>(boot, "memory_budget_mb", 1024, source) << 20;

  const toml::table* inf = section(root, "inference", source);
  if (inf) check_keys(*inf, {"alpha", "k", "side", "method", "max_subset_enumeration"}, source + " [inference]");
  config.inference.alpha = get_or<double>(inf, "alpha", 0.05, source);
  config.inference.k = get_or<std::size_t>(inf, "k", 1, source);
  config.inference.side = parse_side(get_or<std::string>(inf, "side", "two_sided", source));
  config.inference.method = parse_method(get_or<std::string>(inf, "method", "one_step", source));
  config.inference.max_subset_enumeration = get_or<std::size_t>(inf, "max_subset_enumeration", 50000, source);
  config.bootstrap.side = config.inference.side;

  if (const toml::table* ai = section(root, "autointerp", source)) {
    const std::string where = source + " [autointerp]";
    check_keys(*ai,
               {"enabled", "exemplars", "backend", "endpoint", "model", "api_key_env", "generation_effort",
                "evaluation_effort", "timeout_seconds", "retries", "max_in_flight", "cache_dir", "score_alpha",
                "interval", "mock"},
               where);
    AutointerpSettings& s = config.autointerp;
    s.enabled = get_or<bool>(ai, "enabled", true, where);
    s.exemplars = get_or<std::size_t>(ai, "exemplars", 20, where);
    const std::string mode = get_or<std::string>(ai, "backend", "mock", where);
    if (mode == "mock") {
      s.backend.mode = BackendMode::mock;
    } else if (mode == "live") {
      s.backend.mode = BackendMode::live;
    } else {
      throw ConfigError(where + ": backend must be 'mock' or 'live'");
    }
    s.backend.endpoint_url = get_or<std::string>(ai, "endpoint", "", where);
    s.backend.model = get_or<std::string>(ai, "model", s.backend.model, where);
    s.backend.api_key_env = get_or<std::string>(ai, "api_key_env", s.backend.api_key_env, where);
    s.backend.generation_effort = get_or<std::string>(ai, "generation_effort", s.backend.generation_effort, where);
    s.backend.evaluation_effort = get_or<std::string>(ai, "evaluation_effort", s.backend.evaluation_effort, where);
    s.backend.timeout_seconds = get_or<double>(ai, "timeout_seconds", s.backend.timeout_seconds, where);
    s.backend.retries = get_or<std::size_t>(ai, "retries", s.backend.retries, where);
    s.backend.max_in_flight = get_or<std::size_t>(ai, "max_in_flight", s.backend.max_in_flight, where);
    if (ai->contains("cache_dir")) s.backend.cache_dir = resolve(base_dir, get_or<std::string>(ai, "cache_dir", "", where));
    s.score_alpha = get_or<double>(ai, "score_alpha", 0.05, where);
    s.interval = parse_interval_method(get_or<std::string>(ai, "interval", "arcsine", where));
    if (const toml::node* node = ai->get("mock")) {
      const toml::table* mock = node->as_table();
      if (!mock) throw ConfigError(where + ": mock must be a table");
      const std::string mwhere = source + " [autointerp.mock]";
      check_keys(*mock, {"rule", "constant", "descriptions", "keywords"}, mwhere);
      s.mock_rule = parse_mock_rule(get_or<std::string>(mock, "rule", "keyword", mwhere));
      s.mock_constant = static_cast<int>(get_or<std::size_t>(mock, "constant", 0, mwhere));
      if (s.mock_constant > 1) throw ConfigError(mwhere + ": constant must be 0 or 1");
      if (const toml::node* d = mock->get("descriptions")) {
        const toml::table* table = d->as_table();
        if (!table) throw ConfigError(mwhere + ": descriptions must be a table");
        for (const auto& [key, value] : *table) {
          const auto text = value.value<std::string>();
          if (!text) throw ConfigError(mwhere + ": descriptions must be strings");
          s.mock_descriptions[feature_key(key.str(), mwhere)] = *text;
        }
      }
      if (const toml::node* kw = mock->get("keywords")) {
        const toml::table* table = kw->as_table();
        if (!table) throw ConfigError(mwhere + ": keywords must be a table");
        for (const auto& [key, value] : *table) {
          const toml::array* list = value.as_array();
          if (!list) throw ConfigError(mwhere + ": keywords must map ids to string arrays");
          auto& words = s.mock_keywords[feature_key(key.str(), mwhere)];
          for (const auto& item : *list) {
            const auto word = item.value<std::string>();
            if (!word) throw ConfigError(mwhere + ": keywords must map ids to string arrays");
            words.push_back(*word);
          }
        }
      }
    }
  }

  const toml::table* output = section(root, "output", source);
  if (output) check_keys(*output, {"dir"}, source + " [output]");
  config.output_dir = resolve(base_dir, get_or<std::string>(output, "dir", "out", source));
  return config;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return parse_run_config(buffer.str(), base, path.string());
}

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides) {
  if (overrides.seed) {
    config.split_seed = *overrides.seed;
    config.bootstrap.seed = *overrides.seed;
  }
  if (overrides.alpha) config.inference.alpha = *overrides.alpha;
  if (overrides.k) config.inference.k = *overrides.k;
  if (overrides.bootstrap_draws) config.bootstrap.n_draws = *overrides.bootstrap_draws;
  if (overrides.eval_fraction) config.eval_fraction = *overrides.eval_fraction;
  if (overrides.mock_llm) config.autointerp.backend.mode = BackendMode::mock;
  if (overrides.threads) config.threads = *overrides.threads;
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
}

// ---- analyze --------------------------------------------------------------

namespace {

// Dictionary rows reordered to follow the corpus.
FeatureMatrix align_to_corpus(const FeatureMatrix& dict, const Corpus& corpus) {
  if (dict.n_docs() != corpus.size()) {
    throw IngestionError("dictionary has " + std::to_string(dict.n_docs()) + " documents but the corpus has " +
                         std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  std::vector<char> filled(corpus.size(), 0);
  for (std::size_t r = 0; r < dict.n_docs(); ++r) {
    const auto index = corpus.index_of(dict.doc_ids()[r]);
    if (!index) throw IngestionError("dictionary document '" + dict.doc_ids()[r] + "' is not in the corpus");
    order[*index] = r;
    filled[*index] = 1;
  }
  if (std::find(filled.begin(), filled.end(), 0) != filled.end()) {
    throw IngestionError("dictionary repeats a document");
  }
  return dict.subset_rows(order);
}

void write_file(const fs::path& path, const std::string& content, std::vector<fs::path>& written) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw ConfigError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
  written.push_back(path);
}

std::string describe_input(const RunConfig& config) {
  return config.activations ? config.activations->filename().string() : config.dictionary->filename().string();
}

}  // namespace

AnalyzeResult run_analyze(const RunConfig& config, std::shared_ptr<LlmBackend> backend) {
  config.validate();
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir)) {
    throw ConfigError("cannot create output directory '" + config.output_dir.string() + "'");
  }

  const Corpus corpus = read_corpus_jsonl(config.corpus);
  spdlog::info("loaded {} documents", corpus.size());
  std::optional<ActivationSummary> summary;
  FeatureMatrix y;
  if (config.activations) {
    summary.emplace(corpus);
    read_activations_tsv(*config.activations, *summary);
    y = pool_and_binarize(*summary, config.threshold);
  } else {
    y = align_to_corpus(load_dictionary_file(*config.dictionary), corpus);
  }
  spdlog::info("feature matrix: {} documents x {} features, {} nonzeros", y.n_docs(), y.p(), y.nonzeros());

  const SplitIndices split = split_sample(corpus.size(), config.eval_fraction, config.split_seed);
  const FeatureMatrix filtered = drop_degenerate(y, split.estim);
  spdlog::info("{} features never activate in the estimation split and were dropped",
               filtered.dropped_features().size());

  std::vector<double> w;
  if (config.transform.kind == TransformKind::ht_diff_in_means) w = corpus.covariates();
  auto x = std::make_shared<const TransformedMatrix>(apply_transform(filtered, w, config.transform, split.estim));
  const FeatureEstimates est = estimate_features(*x, config.bootstrap.studentize, config.threads);

  BootstrapConfig boot = config.bootstrap;
  boot.threads = config.threads;
  const BootstrapRun run = run_bootstrap(x, est, boot);
  InferenceReport report = select_features(est, run, config.inference);
  report.echo = {
      {"input", describe_input(config)},
      {"transform", to_string(config.transform.kind)},
      {"pi", config.transform.kind == TransformKind::ht_diff_in_means ? tsv::format_double(x->pi_used()) : "NA"},
      {"threshold", tsv::format_double(config.threshold)},
      {"eval_fraction", tsv::format_double(config.eval_fraction)},
      {"split_seed", std::to_string(config.split_seed)},
      {"n_total", std::to_string(corpus.size())},
      {"n_eval", std::to_string(split.eval.size())},
      {"dropped_features", std::to_string(filtered.dropped_features().size())},
  };
  spdlog::info("{} discoveries among {} features (k={}, alpha={})", report.selected.size(), report.p,
               config.inference.k, config.inference.alpha);

  AnalyzeResult result;
  result.n_total = corpus.size();

  if (config.autointerp.enabled && !report.selected.empty()) {
    const AutointerpSettings& ai = config.autointerp;
    if (!backend) {
      MockConfig mock;
      mock.descriptions = ai.mock_descriptions;
      mock.keywords = ai.mock_keywords;
      mock.rule = ai.mock_rule;
      mock.constant = ai.mock_constant;
      mock.oracle = [&y, &corpus](const std::string& doc_id, FeatureId feature) {
        const auto row = corpus.index_of(doc_id);
        const auto column = y.column_of(feature);
        return row && column && y.at(*row, *column) ? 1 : 0;
      };
      backend = make_backend(ai.backend, std::move(mock));
    }

    const std::vector<ExemplarSet> exemplars =
        extract_exemplars(*summary, report.selected, ai.exemplars, split.estim);
    std::vector<Description> descriptions(exemplars.size());
    const unsigned workers = static_cast<unsigned>(ai.backend.max_in_flight);
    parallel_for(exemplars.size(), workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t f = begin; f < end; ++f) {
        descriptions[f] = generate_description(*backend, exemplars[f], ai.backend.retries, ai.backend.generation_effort);
      }
    });

    std::vector<ClassifyTask> tasks;
    for (const Description& d : descriptions) {
      for (std::size_t i : split.eval) {
        tasks.push_back({corpus.at(i).doc_id, d.feature_id, d.text, corpus.rendered_text(i)});
      }
    }
    const std::vector<ClassifierPrediction> predictions =
        classify_all(*backend, std::move(tasks), ai.backend.retries, ai.backend.evaluation_effort, ai.backend.max_in_flight);

    std::unordered_map<FeatureId, EvalTable> tables;
    for (const Description& d : descriptions) tables[d.feature_id].feature_id = d.feature_id;
    for (const ClassifierPrediction& p : predictions) {
      EvalTable& table = tables[p.feature_id];
      if (!p.valid) {
        ++table.invalid_count;
        continue;
      }
      const auto row = corpus.index_of(p.doc_id);
      const auto column = y.column_of(p.feature_id);
      const int truth = row && column && y.at(*row, *column) ? 1 : 0;
      table.rows.push_back({p.doc_id, truth, p.predicted});
    }
    for (const Description& d : descriptions) {
      const EvalTable& table = tables[d.feature_id];
      if (table.invalid_count > 0) {
        spdlog::warn("{} classifications of feature {} had no parsable label and were excluded", table.invalid_count,
                     d.feature_id);
      }
      result.scores.push_back(score_table(table, d.text, ai.score_alpha, ai.interval));
    }
    result.descriptions = std::move(descriptions);
  } else if (config.autointerp.enabled) {
    spdlog::info("no discoveries; skipping autointerp");
  }

  std::ostringstream inference_out;
  write_inference_report(report, inference_out);
  write_file(config.output_dir / "inference_report.jsonl", inference_out.str(), result.written);
  std::ostringstream table_out;
  write_inference_table(report, table_out);
  write_file(config.output_dir / "inference_table.tsv", table_out.str(), result.written);
  if (config.autointerp.enabled) {
    std::ostringstream desc_out;
    for (const Description& d : result.descriptions) {
      nlohmann::ordered_json record;
      record["feature_id"] = d.feature_id;
      record["description"] = d.text;
      record["model"] = d.model_id;
      record["reasoning_effort"] = d.reasoning_effort;
      record["prompt_hash"] = d.prompt_hash;
      record["raw_model_output"] = d.raw_model_output;
      desc_out << record.dump() << '\n';
    }
    write_file(config.output_dir / "descriptions.jsonl", desc_out.str(), result.written);
    std::ostringstream score_out;
    write_score_report(result.scores, score_out);
    write_file(config.output_dir / "score_report.tsv", score_out.str(), result.written);
  }
  std::ostringstream discovery_out;
  write_discovery_table(report, config.autointerp.enabled ? &result.scores : nullptr, discovery_out);
  write_file(config.output_dir / "discoveries.txt", discovery_out.str(), result.written);

  result.report = std::move(report);
  return result;
}

// ---- report ---------------------------------------------------------------

std::vector<PlotRow> plot_rows(const InferenceReport& report, const std::vector<ScoreRow>* scores) {
  std::unordered_map<FeatureId, const FeatureResult*> by_id;
  for (const FeatureResult& f : report.features) by_id.emplace(f.feature_id, &f);
  std::unordered_map<FeatureId, const ScoreRow*> score_of;
  if (scores) {
    for (const ScoreRow& s : *scores) {
      const auto it = by_id.find(s.feature_id);
      if (it == by_id.end() || !it->second->rejected) {
        throw ValidationError("score report names feature " + std::to_string(s.feature_id) +
                              ", which is not a discovery in the inference report");
      }
      score_of.emplace(s.feature_id, &s);
    }
  }
  std::vector<PlotRow> rows;
  for (FeatureId id : report.selected) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("selected feature " + std::to_string(id) + " has no record");
    const FeatureResult& f = *it->second;
    PlotRow row;
    row.feature_id = id;
    row.estimate = f.theta_hat;
    row.ci_lower = f.ci_lower;
    row.ci_upper = f.ci_upper;
    const auto s = score_of.find(id);
    if (s != score_of.end() && !s->second->description.empty()) {
      row.description = s->second->description;
      if (s->second->accuracy) row.a_score = s->second->accuracy->point;
    } else if (scores) {
      spdlog::warn("discovery {} has no description", id);
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const PlotRow& a, const PlotRow& b) {
    return a.estimate != b.estimate ? a.estimate > b.estimate : a.feature_id < b.feature_id;
  });
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r].rank = r + 1;
  return rows;
}

namespace {

std::string optional_cell(const std::optional<double>& value, int decimals) {
  return value ? tsv::format_fixed(*value, decimals) : "NA";
}

}  // namespace

void write_plot_data(const std::vector<PlotRow>& rows, std::ostream& out) {
  out << "rank\tfeature_id\testimate\tci_lower\tci_upper\tdescription\ta_score\n";
  for (const PlotRow& row : rows) {
    out << row.rank << '\t' << row.feature_id << '\t' << tsv::format_double(row.estimate) << '\t'
        << (row.ci_lower ? tsv::format_double(*row.ci_lower) : "NA") << '\t'
        << (row.ci_upper ? tsv::format_double(*row.ci_upper) : "NA") << '\t' << tsv::sanitize_cell(row.description)
        << '\t' << optional_cell(row.a_score, 4) << '\n';
  }
}

void write_discovery_table(const InferenceReport& report, const std::vector<ScoreRow>* scores, std::ostream& out) {
  const std::vector<PlotRow> rows = plot_rows(report, scores);
  out << "Ranked discoveries: " << rows.size() << " of " << report.p << " features (k=" << report.config.k
      << ", alpha=" << tsv::format_double(report.config.alpha) << ", " << to_string(report.config.method) << ")\n";
  if (rows.empty()) return;
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"Feature", "Estimate", "Interval", "A-score", "Description"});
  for (const PlotRow& row : rows) {
    std::string interval = "NA";
    if (row.ci_lower && row.ci_upper) {
      interval = "[" + tsv::format_fixed(*row.ci_lower, 4) + ", " + tsv::format_fixed(*row.ci_upper, 4) + "]";
    }
    cells.push_back({std::to_string(row.feature_id), tsv::format_fixed(row.estimate, 4), interval,
                     optional_cell(row.a_score, 2), row.description});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], line[c].size());
  }
  for (const auto& line : cells) {
    std::string text;
    for (std::size_t c = 0; c < 4; ++c) {
      text += line[c];
      text.append(width[c] - line[c].size() + 2, ' ');
    }
    text += tsv::sanitize_cell(line[4]);
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << '\n';
  }
}

}  // namespace discovery
