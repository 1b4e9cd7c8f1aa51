#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "discovery/data_model.hpp"
#include "discovery/error.hpp"

using namespace discovery;

namespace {

Corpus small_corpus() {
  std::vector<Document> docs;
  for (int i = 0; i < 4; ++i) {
    Document d;
    d.doc_id = "d" + std::to_string(i);
    d.text = "alpha beta gamma delta";
    d.token_count = 4;
    d.covariate_w = i % 2;
    docs.push_back(d);
  }
  return Corpus(std::move(docs));
}

}  // namespace

TEST_CASE("binarization uses a strict threshold on the max over tokens") {
  const Corpus corpus = small_corpus();
  const std::vector<ActivationRecord> records = {
      {"d0", 5, 0, 0.5}, {"d0", 5, 2, 1.5}, {"d1", 5, 1, 1.0}, {"d2", 9, 3, 0.2}, {"d3", 9, 0, 2.0},
  };
  const FeatureMatrix y = pool_and_binarize(records, corpus, 1.0);
  REQUIRE(y.feature_ids() == std::vector<FeatureId>{5, 9});
  CHECK(y.at(0, 0));
  CHECK_FALSE(y.at(1, 0));  // equal to the threshold
  CHECK_FALSE(y.at(2, 1));
  CHECK(y.at(3, 1));
  CHECK(y.provenance().pooling == "max");
  CHECK(y.provenance().threshold == 1.0);
}

TEST_CASE("pooling keeps the earliest token among tied maxima") {
  const Corpus corpus = small_corpus();
  ActivationSummary summary(corpus);
  summary.add({"d0", 1, 3, 2.0});
  summary.add({"d0", 1, 1, 2.0});
  summary.add({"d0", 1, 2, 1.0});
  const auto pooled = summary.pooled(0);
  REQUIRE(pooled.size() == 1);
  CHECK(pooled[0].max_value == 2.0);
  CHECK(pooled[0].argmax_token == 1);
}

TEST_CASE("malformed activation records are rejected") {
  const Corpus corpus = small_corpus();
  ActivationSummary summary(corpus);
  CHECK_THROWS_AS(summary.add({"missing", 1, 0, 1.0}), IngestionError);
  CHECK_THROWS_AS(summary.add({"d0", 1, 0, -0.1}), ValidationError);
  CHECK_THROWS_AS(summary.add({"d0", 1, 4, 1.0}), ValidationError);
  CHECK_THROWS_AS(summary.add({"d0", 1, 0, std::nan("")}), ValidationError);
}

TEST_CASE("raising the threshold never adds entries") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> value(0.0, 3.0);
  const Corpus corpus = small_corpus();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ActivationRecord> records;
    for (int r = 0; r < 40; ++r) {
      records.push_back({"d" + std::to_string(gen() % 4), static_cast<FeatureId>(gen() % 6),
                         static_cast<std::uint32_t>(gen() % 4), value(gen)});
    }
    const double lo = value(gen);
    const double hi = lo + value(gen);
    const FeatureMatrix a = pool_and_binarize(records, corpus, lo);
    const FeatureMatrix b = pool_and_binarize(records, corpus, hi);
    REQUIRE(a.feature_ids() == b.feature_ids());
    for (std::size_t i = 0; i < a.n_docs(); ++i) {
      for (std::size_t j = 0; j < a.p(); ++j) {
        if (b.at(i, j)) CHECK(a.at(i, j));
      }
    }
  }
}

TEST_CASE("degenerate filtering keeps exactly the features active in scope") {
  const Corpus corpus = small_corpus();
  const std::vector<ActivationRecord> records = {{"d0", 1, 0, 1.0}, {"d3", 2, 0, 1.0}, {"d1", 3, 0, 1.0}};
  const FeatureMatrix y = pool_and_binarize(records, corpus, 0.0);
  const std::size_t scope[] = {0, 1, 2};
  const FeatureMatrix kept = drop_degenerate(y, scope);
  CHECK(kept.feature_ids() == std::vector<FeatureId>{1, 3});
  CHECK(kept.dropped_features() == std::vector<FeatureId>{2});
  CHECK(kept.n_docs() == 4);
  const auto counts = kept.column_counts(scope);
  CHECK(std::all_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
}

TEST_CASE("sample split is a deterministic partition of the requested size") {
  for (std::size_t n : {10u, 50u, 931u}) {
    for (double frac : {0.1, 0.25, 0.5}) {
      const auto a = split_sample(n, frac, 42);
      const auto b = split_sample(n, frac, 42);
      CHECK(a.estim == b.estim);
      CHECK(a.eval == b.eval);
      CHECK(a.eval.size() == static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
      std::set<std::size_t> all(a.estim.begin(), a.estim.end());
      all.insert(a.eval.begin(), a.eval.end());
      CHECK(all.size() == n);
      CHECK(a.estim.size() + a.eval.size() == n);
      CHECK(std::is_sorted(a.eval.begin(), a.eval.end()));
    }
  }
  CHECK(split_sample(500, 0.1, 1).eval != split_sample(500, 0.1, 2).eval);
  CHECK_THROWS_AS(split_sample(10, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_sample(10, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(split_sample(2, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(split_sample(3, 0.1, 1), ConfigError);
  CHECK(split_sample(3, 0.25, 1).eval.size() == 1);
}

TEST_CASE("the evaluation split is roughly uniform over documents") {
  // Each document lands in eval with probability m/n; over 400 seeds the count
  // is Binomial(400, 0.2) with sd 8, so 5 sd bounds every document.
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    for (std::size_t i : split_sample(20, 0.2, seed).eval) ++hits[i];
  }
  for (int h : hits) {
    CHECK(h > 80 - 40);
    CHECK(h < 80 + 40);
  }
}

TEST_CASE("corpus lines parse with token counts and explicit tokens") {
  std::istringstream in(
      R"({"doc_id":"a","w":1,"text":"one two  three"})"
      "\n"
      R"({"doc_id":"b","w":false,"tokens":["He","llo"," world"]})"
      "\n");
  const Corpus corpus = parse_corpus_jsonl(in, "mem");
  REQUIRE(corpus.size() == 2);
  CHECK(corpus.at(0).token_count == 3);
  CHECK(corpus.at(1).token_count == 3);
  CHECK(corpus.covariates() == std::vector<double>{1.0, 0.0});
  CHECK(corpus.rendered_text(1) == "Hello world");
  const auto spans = corpus.token_spans(1);
  REQUIRE(spans.size() == 3);
  CHECK(spans[2].begin == 5);
  CHECK(spans[2].end == 11);
  const auto words = corpus.token_spans(0);
  REQUIRE(words.size() == 3);
  CHECK(corpus.rendered_text(0).substr(words[2].begin, words[2].end - words[2].begin) == "three");
}

TEST_CASE("corpus parse errors name the line") {
  std::istringstream in("{\"doc_id\":\"a\",\"w\":1}\n{\"doc_id\":7}\n");
  try {
    parse_corpus_jsonl(in, "mem");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream dup("{\"doc_id\":\"a\"}\n{\"doc_id\":\"a\"}\n");
  CHECK_THROWS_AS(parse_corpus_jsonl(dup, "mem"), Error);
}

TEST_CASE("activation TSV errors carry the line number") {
  std::istringstream in("d0\t1\t0\t0.5\nd0\t1\t0\n");
  try {
    parse_activations_tsv(in, "acts");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("dictionary files round-trip") {
  const Corpus corpus = small_corpus();
  const std::vector<ActivationRecord> records = {{"d0", 4, 0, 1.0}, {"d2", 4, 1, 1.0}, {"d2", 17, 0, 3.0},
                                                 {"d3", 2, 0, 1.0}};
  const FeatureMatrix y = pool_and_binarize(records, corpus, 0.5);
  const std::size_t scope[] = {0, 2};
  const FeatureMatrix filtered = drop_degenerate(y, scope);
  for (const FeatureMatrix* m : {&y, &filtered}) {
    std::ostringstream out;
    write_dictionary(*m, out);
    std::istringstream in(out.str());
    const FeatureMatrix back = parse_dictionary(in, "dict");
    CHECK(back == *m);
    std::ostringstream again;
    write_dictionary(back, again);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("dictionary parse rejects undeclared documents") {
  std::istringstream in("DICT v1 n=1 p_declared=3\n#doc\ta\nb\t1\n");
  CHECK_THROWS_AS(parse_dictionary(in, "dict"), ParseError);
}
