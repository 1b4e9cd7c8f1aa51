#include "discovery/data_model.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/philox.hpp"
#include "discovery/tsv.hpp"

namespace discovery {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<TokenSpan> whitespace_spans(std::string_view text) {
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    spans.push_back({begin, i});
  }
  return spans;
}

void check_doc_id(const std::string& doc_id) {
  if (doc_id.empty()) throw ValidationError("document id must be nonempty");
  if (doc_id.find_first_of("\t\n\r") != std::string::npos) {
    throw ValidationError("document id '" + doc_id + "' contains a tab or line break");
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

// ---- Corpus ---------------------------------------------------------------

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  lookup_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    Document& doc = documents_[i];
    check_doc_id(doc.doc_id);
    if (!doc.tokens.empty()) {
      doc.token_count = doc.tokens.size();
    }
    if (!lookup_.emplace(doc.doc_id, i).second) {
      throw ValidationError("duplicate document id '" + doc.doc_id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::index_of(std::string_view doc_id) const {
  const auto it = lookup_.find(std::string(doc_id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> Corpus::covariates() const {
  std::vector<double> w;
  w.reserve(documents_.size());
  for (const Document& doc : documents_) {
    if (!doc.covariate_w) {
      throw ValidationError("document '" + doc.doc_id + "' has no covariate w");
    }
    w.push_back(*doc.covariate_w);
  }
  return w;
}

std::string Corpus::rendered_text(std::size_t index) const {
  const Document& doc = at(index);
  if (!doc.tokens.empty()) {
    std::string out;
    for (const std::string& token : doc.tokens) out += token;
    return out;
  }
  return doc.text.value_or(std::string{});
}

std::vector<TokenSpan> Corpus::token_spans(std::size_t index) const {
  const Document& doc = at(index);
  if (!doc.tokens.empty()) {
    std::vector<TokenSpan> spans;
    spans.reserve(doc.tokens.size());
    std::size_t offset = 0;
    for (const std::string& token : doc.tokens) {
      spans.push_back({offset, offset + token.size()});
      offset += token.size();
    }
    return spans;
  }
  return whitespace_spans(doc.text.value_or(std::string{}));
}

// ---- ActivationSummary ----------------------------------------------------

ActivationSummary::ActivationSummary(const Corpus& corpus) : corpus_(&corpus), per_doc_(corpus.size()) {}

void ActivationSummary::add(const ActivationRecord& record) {
  const auto index = corpus_->index_of(record.doc_id);
  if (!index) throw IngestionError("activation record references unknown doc_id '" + record.doc_id + "'");
  if (!(record.value >= 0.0) || !std::isfinite(record.value)) {
    throw ValidationError("activation value for doc '" + record.doc_id + "', feature " +
                          std::to_string(record.feature_id) + " must be finite and nonnegative");
  }
  const Document& doc = corpus_->at(*index);
  if (record.token_index >= doc.token_count) {
    throw ValidationError("token_index " + std::to_string(record.token_index) + " out of range for doc '" +
                          record.doc_id + "' with " + std::to_string(doc.token_count) + " tokens");
  }
  auto& pooled = per_doc_[*index];
  auto [it, inserted] = pooled.try_emplace(record.feature_id,
                                           PooledActivation{record.feature_id, record.value, record.token_index});
  if (inserted) return;
  PooledActivation& entry = it->second;
  if (record.value > entry.max_value ||
      (record.value == entry.max_value && record.token_index < entry.argmax_token)) {
    entry.max_value = record.value;
    entry.argmax_token = record.token_index;
  }
}

std::vector<PooledActivation> ActivationSummary::pooled(std::size_t doc_index) const {
  std::vector<PooledActivation> out;
  const auto& map = per_doc_.at(doc_index);
  out.reserve(map.size());
  for (const auto& [id, entry] : map) out.push_back(entry);
  std::sort(out.begin(), out.end(),
            [](const PooledActivation& a, const PooledActivation& b) { return a.feature_id < b.feature_id; });
  return out;
}

std::vector<FeatureId> ActivationSummary::seen_features() const {
  std::vector<FeatureId> ids;
  for (const auto& map : per_doc_) {
    for (const auto& [id, entry] : map) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// ---- FeatureMatrix --------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::vector<std::string> doc_ids, std::vector<FeatureId> feature_ids,
                             std::vector<std::vector<std::uint32_t>> rows, std::vector<FeatureId> dropped,
                             Provenance provenance)
    : doc_ids_(std::move(doc_ids)),
      feature_ids_(std::move(feature_ids)),
      rows_(std::move(rows)),
      dropped_(std::move(dropped)),
      provenance_(std::move(provenance)) {
  if (rows_.size() != doc_ids_.size()) {
    throw ValidationError("feature matrix has " + std::to_string(rows_.size()) + " rows but " +
                          std::to_string(doc_ids_.size()) + " document ids");
  }
  for (std::size_t j = 1; j < feature_ids_.size(); ++j) {
    if (feature_ids_[j] <= feature_ids_[j - 1]) {
      throw ValidationError("feature ids must be strictly increasing");
    }
  }
  for (const auto& row : rows_) {
    for (std::size_t e = 0; e < row.size(); ++e) {
      if (row[e] >= feature_ids_.size()) throw ValidationError("feature matrix entry outside the column range");
      if (e > 0 && row[e] <= row[e - 1]) throw ValidationError("feature matrix row entries must be strictly increasing");
    }
  }
}

bool FeatureMatrix::at(std::size_t row, std::size_t column) const {
  const auto& entries = rows_.at(row);
  return std::binary_search(entries.begin(), entries.end(), static_cast<std::uint32_t>(column));
}

std::optional<std::size_t> FeatureMatrix::column_of(FeatureId feature_id) const {
  const auto it = std::lower_bound(feature_ids_.begin(), feature_ids_.end(), feature_id);
  if (it == feature_ids_.end() || *it != feature_id) return std::nullopt;
  return static_cast<std::size_t>(it - feature_ids_.begin());
}

std::size_t FeatureMatrix::nonzeros() const {
  std::size_t total = 0;
  for (const auto& row : rows_) total += row.size();
  return total;
}

std::vector<std::size_t> FeatureMatrix::column_counts(std::span<const std::size_t> scope) const {
  std::vector<std::size_t> counts(p(), 0);
  for (std::size_t i : scope) {
    for (std::uint32_t column : rows_.at(i)) ++counts[column];
  }
  return counts;
}

FeatureMatrix FeatureMatrix::subset_rows(std::span<const std::size_t> scope) const {
  std::vector<std::string> ids;
  std::vector<std::vector<std::uint32_t>> rows;
  ids.reserve(scope.size());
  rows.reserve(scope.size());
  for (std::size_t i : scope) {
    ids.push_back(doc_ids_.at(i));
    rows.push_back(rows_.at(i));
  }
  return FeatureMatrix(std::move(ids), feature_ids_, std::move(rows), dropped_, provenance_);
}

// ---- operations -----------------------------------------------------------

FeatureMatrix pool_and_binarize(const ActivationSummary& summary, double threshold) {
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
    throw ValidationError("binarization threshold must be finite and nonnegative");
  }
  const Corpus& corpus = summary.corpus();
  std::vector<FeatureId> features = summary.seen_features();

  std::vector<std::string> doc_ids;
  std::vector<std::vector<std::uint32_t>> rows(corpus.size());
  doc_ids.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Document& doc = corpus.at(i);
    doc_ids.push_back(doc.doc_id);
    if (doc.token_count == 0) {
      spdlog::warn("document '{}' has zero tokens; its feature row is all zero", doc.doc_id);
      continue;
    }
    for (const PooledActivation& entry : summary.pooled(i)) {
      if (entry.max_value > threshold) {
        const auto it = std::lower_bound(features.begin(), features.end(), entry.feature_id);
        rows[i].push_back(static_cast<std::uint32_t>(it - features.begin()));
      }
    }
  }

  Provenance provenance;
  provenance.threshold = threshold;
  provenance.source = "activations";
  if (!features.empty()) provenance.declared_features = static_cast<std::size_t>(features.back()) + 1;
  return FeatureMatrix(std::move(doc_ids), std::move(features), std::move(rows), {}, std::move(provenance));
}

FeatureMatrix pool_and_binarize(std::span<const ActivationRecord> records, const Corpus& corpus,
                                double threshold) {
  ActivationSummary summary(corpus);
  for (const ActivationRecord& record : records) summary.add(record);
  return pool_and_binarize(summary, threshold);
}

FeatureMatrix drop_degenerate(const FeatureMatrix& matrix, std::span<const std::size_t> scope) {
  if (scope.empty()) throw ValidationError("degenerate-feature filtering needs a nonempty row scope");
  for (std::size_t i : scope) {
    if (i >= matrix.n_docs()) {
      throw ValidationError("row " + std::to_string(i) + " in filtering scope exceeds matrix size " +
                            std::to_string(matrix.n_docs()));
    }
  }
  const std::vector<std::size_t> counts = matrix.column_counts(scope);

  constexpr auto kGone = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> remap(matrix.p(), kGone);
  std::vector<FeatureId> kept;
  std::vector<FeatureId> dropped = matrix.dropped_features();
  for (std::size_t j = 0; j < matrix.p(); ++j) {
    if (counts[j] > 0) {
      remap[j] = static_cast<std::uint32_t>(kept.size());
      kept.push_back(matrix.feature_ids()[j]);
    } else {
      dropped.push_back(matrix.feature_ids()[j]);
    }
  }
  std::sort(dropped.begin(), dropped.end());

  std::vector<std::vector<std::uint32_t>> rows;
  rows.reserve(matrix.n_docs());
  for (const auto& row : matrix.rows()) {
    std::vector<std::uint32_t> out;
    out.reserve(row.size());
    for (std::uint32_t column : row) {
      if (remap[column] != kGone) out.push_back(remap[column]);
    }
    rows.push_back(std::move(out));
  }
  return FeatureMatrix(matrix.doc_ids(), std::move(kept), std::move(rows), std::move(dropped),
                       matrix.provenance());
}

SplitIndices split_sample(std::size_t n_total, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw ConfigError("eval fraction must lie strictly between 0 and 1");
  }
  const auto m = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n_total)));
  if (m < 1 || m > n_total || n_total - m < 2) {
    throw ConfigError("split of " + std::to_string(n_total) + " documents with eval fraction " +
                      tsv::format_double(eval_fraction) + " leaves " + std::to_string(m) +
                      " evaluation and " + std::to_string(n_total >= m ? n_total - m : 0) +
                      " estimation documents; need at least 1 and 2");
  }

  // A uniform permutation obtained by sorting on counter-based random keys.
  const rng::Key key = rng::Key::from(seed);
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n_total);
  for (std::size_t i = 0; i < n_total; ++i) {
    const rng::Counter block = rng::philox4x32(
        {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32), 0,
         rng::tag::kSplit},
        key);
    keyed[i] = {(static_cast<std::uint64_t>(block[0]) << 32) | block[1], i};
  }
  std::sort(keyed.begin(), keyed.end());

  SplitIndices split;
  split.seed = seed;
  for (std::size_t r = 0; r < n_total; ++r) {
    (r < m ? split.eval : split.estim).push_back(keyed[r].second);
  }
  std::sort(split.eval.begin(), split.eval.end());
  std::sort(split.estim.begin(), split.estim.end());
  return split;
}

// ---- corpus JSON lines ----------------------------------------------------

Corpus parse_corpus_jsonl(std::istream& in, const std::string& source) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = tsv::strip_cr(line);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(view);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    if (!record.contains("doc_id") || !record["doc_id"].is_string()) {
      throw ParseError(source, line_no, "missing string field 'doc_id'");
    }
    Document doc;
    doc.doc_id = record["doc_id"].get<std::string>();
    if (record.contains("w") && !record["w"].is_null()) {
      const auto& w = record["w"];
      if (w.is_boolean()) {
        doc.covariate_w = w.get<bool>() ? 1.0 : 0.0;
      } else if (w.is_number()) {
        doc.covariate_w = w.get<double>();
      } else {
        throw ParseError(source, line_no, "field 'w' must be a number");
      }
    }
    if (record.contains("text") && !record["text"].is_null()) {
      if (!record["text"].is_string()) throw ParseError(source, line_no, "field 'text' must be a string");
      doc.text = record["text"].get<std::string>();
    }
    if (record.contains("tokens") && !record["tokens"].is_null()) {
      if (!record["tokens"].is_array()) throw ParseError(source, line_no, "field 'tokens' must be an array");
      for (const auto& token : record["tokens"]) {
        if (!token.is_string()) throw ParseError(source, line_no, "tokens must be strings");
        doc.tokens.push_back(token.get<std::string>());
      }
    }
    if (record.contains("token_count") && !record["token_count"].is_null()) {
      if (!record["token_count"].is_number_unsigned()) {
        throw ParseError(source, line_no, "field 'token_count' must be a nonnegative integer");
      }
      doc.token_count = record["token_count"].get<std::size_t>();
      if (!doc.tokens.empty() && doc.token_count != doc.tokens.size()) {
        throw ParseError(source, line_no, "token_count disagrees with tokens");
      }
    } else if (doc.tokens.empty()) {
      doc.token_count = whitespace_spans(doc.text.value_or(std::string{})).size();
    }
    docs.push_back(std::move(doc));
  }
  try {
    return Corpus(std::move(docs));
  } catch (const ValidationError& e) {
    throw ParseError(source, line_no, e.what());
  }
}

Corpus read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return parse_corpus_jsonl(in, path.string());
}

// ---- activations TSV ------------------------------------------------------

namespace {

template <typename Sink>
void scan_activations(std::istream& in, const std::string& source, Sink&& sink) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = tsv::strip_cr(line);
    if (view.empty()) continue;
    const auto fields = tsv::split(view);
    if (fields.size() != 4) {
      throw ParseError(source, line_no, "expected 4 tab-separated fields, found " + std::to_string(fields.size()));
    }
    ActivationRecord record;
    record.doc_id = std::string(fields[0]);
    unsigned long long feature = 0;
    unsigned long long token = 0;
    if (!tsv::parse_u64(fields[1], feature) || feature > UINT32_MAX) {
      throw ParseError(source, line_no, "invalid feature_id '" + std::string(fields[1]) + "'");
    }
    if (!tsv::parse_u64(fields[2], token) || token > UINT32_MAX) {
      throw ParseError(source, line_no, "invalid token_index '" + std::string(fields[2]) + "'");
    }
    if (!tsv::parse_double(fields[3], record.value)) {
      throw ParseError(source, line_no, "invalid activation value '" + std::string(fields[3]) + "'");
    }
    record.feature_id = static_cast<FeatureId>(feature);
    record.token_index = static_cast<std::uint32_t>(token);
    sink(record, line_no);
  }
}

}  // namespace

void read_activations_tsv(std::istream& in, const std::string& source, ActivationSummary& summary) {
  scan_activations(in, source, [&](const ActivationRecord& record, std::size_t line_no) {
    try {
      summary.add(record);
    } catch (const IngestionError& e) {
      throw IngestionError(source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
}

void read_activations_tsv(const std::filesystem::path& path, ActivationSummary& summary) {
  std::ifstream in = open_input(path);
  read_activations_tsv(in, path.string(), summary);
}

std::vector<ActivationRecord> parse_activations_tsv(std::istream& in, const std::string& source) {
  std::vector<ActivationRecord> records;
  scan_activations(in, source, [&](const ActivationRecord& record, std::size_t) { records.push_back(record); });
  return records;
}

// ---- dictionary file ------------------------------------------------------
//
//   DICT v1 n=<n> p_declared=<p>
//   #provenance<TAB>pooling=<rule><TAB>threshold=<t><TAB>source=<text>   (optional)
//   #doc<TAB><doc_id>                      n lines, in row order
//   #features<TAB><id>,<id>,...            optional; default 0..p_declared-1
//   #dropped<TAB><id>,<id>,...             optional
//   <doc_id><TAB><feature_id>              one line per nonzero entry

namespace {

std::vector<FeatureId> parse_id_list(std::string_view text, const std::string& source, std::size_t line_no) {
  std::vector<FeatureId> ids;
  if (text.empty()) return ids;
  for (std::string_view item : tsv::split(text, ',')) {
    unsigned long long value = 0;
    if (!tsv::parse_u64(item, value) || value > UINT32_MAX) {
      throw ParseError(source, line_no, "invalid feature id '" + std::string(item) + "'");
    }
    ids.push_back(static_cast<FeatureId>(value));
  }
  return ids;
}

std::string join_ids(const std::vector<FeatureId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

bool parse_header_field(std::string_view token, std::string_view name, unsigned long long& value) {
  if (token.substr(0, name.size()) != name) return false;
  return tsv::parse_u64(token.substr(name.size()), value);
}

}  // namespace

FeatureMatrix parse_dictionary(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing DICT header");
  ++line_no;
  const auto header = tsv::split(tsv::strip_cr(line), ' ');
  unsigned long long n = 0;
  unsigned long long p_declared = 0;
  if (header.size() != 4 || header[0] != "DICT" || header[1] != "v1" || !parse_header_field(header[2], "n=", n) ||
      !parse_header_field(header[3], "p_declared=", p_declared)) {
    throw ParseError(source, line_no, "expected header 'DICT v1 n=<n> p_declared=<p>'");
  }

  Provenance provenance;
  provenance.source = "dictionary";
  provenance.declared_features = static_cast<std::size_t>(p_declared);
  std::vector<std::string> doc_ids;
  std::unordered_map<std::string, std::size_t> doc_index;
  std::optional<std::vector<FeatureId>> features;
  std::vector<FeatureId> dropped;
  std::vector<std::pair<std::size_t, FeatureId>> pairs;
  std::vector<std::size_t> pair_lines;
  bool in_pairs = false;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = tsv::strip_cr(line);
    if (view.empty()) continue;
    const auto fields = tsv::split(view);
    if (!view.empty() && view.front() == '#') {
      if (in_pairs) throw ParseError(source, line_no, "directive after the first entry");
      if (fields[0] == "#doc" && fields.size() == 2) {
        const std::string id(fields[1]);
        if (id.empty()) throw ParseError(source, line_no, "empty document id");
        if (!doc_index.emplace(id, doc_ids.size()).second) {
          throw ParseError(source, line_no, "duplicate document declaration '" + id + "'");
        }
        doc_ids.push_back(id);
      } else if (fields[0] == "#features" && fields.size() == 2) {
        if (features) throw ParseError(source, line_no, "repeated #features directive");
        features = parse_id_list(fields[1], source, line_no);
      } else if (fields[0] == "#dropped" && fields.size() == 2) {
        dropped = parse_id_list(fields[1], source, line_no);
      } else if (fields[0] == "#provenance" && fields.size() == 4) {
        if (fields[1].substr(0, 8) != "pooling=" || fields[2].substr(0, 10) != "threshold=" ||
            fields[3].substr(0, 7) != "source=" ||
            !tsv::parse_double(fields[2].substr(10), provenance.threshold)) {
          throw ParseError(source, line_no, "malformed #provenance directive");
        }
        provenance.pooling = std::string(fields[1].substr(8));
        provenance.source = std::string(fields[3].substr(7));
      } else {
        throw ParseError(source, line_no, "unknown or malformed directive");
      }
      continue;
    }
    in_pairs = true;
    if (fields.size() != 2) throw ParseError(source, line_no, "expected '<doc_id><TAB><feature_id>'");
    const auto doc = doc_index.find(std::string(fields[0]));
    if (doc == doc_index.end()) {
      throw ParseError(source, line_no, "entry references undeclared document '" + std::string(fields[0]) + "'");
    }
    unsigned long long feature = 0;
    if (!tsv::parse_u64(fields[1], feature) || feature > UINT32_MAX) {
      throw ParseError(source, line_no, "invalid feature id '" + std::string(fields[1]) + "'");
    }
    pairs.emplace_back(doc->second, static_cast<FeatureId>(feature));
    pair_lines.push_back(line_no);
  }

  if (doc_ids.size() != n) {
    throw ParseError(source, line_no,
                     "header declares n=" + std::to_string(n) + " but " + std::to_string(doc_ids.size()) +
                         " documents were declared");
  }
  std::vector<FeatureId> feature_ids;
  if (features) {
    feature_ids = *features;
    for (std::size_t j = 0; j < feature_ids.size(); ++j) {
      if (feature_ids[j] >= p_declared) throw ParseError(source, line_no, "#features id exceeds p_declared");
      if (j > 0 && feature_ids[j] <= feature_ids[j - 1]) {
        throw ParseError(source, line_no, "#features ids must be strictly increasing");
      }
    }
  } else {
    feature_ids.resize(static_cast<std::size_t>(p_declared));
    std::iota(feature_ids.begin(), feature_ids.end(), FeatureId{0});
  }

  std::vector<std::vector<std::uint32_t>> rows(doc_ids.size());
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [row, feature] = pairs[e];
    const auto it = std::lower_bound(feature_ids.begin(), feature_ids.end(), feature);
    if (it == feature_ids.end() || *it != feature) {
      throw ParseError(source, pair_lines[e], "feature id " + std::to_string(feature) + " is not a declared feature");
    }
    rows[row].push_back(static_cast<std::uint32_t>(it - feature_ids.begin()));
  }
  std::vector<std::size_t> order(pairs.size());
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    const auto dup = std::adjacent_find(row.begin(), row.end());
    if (dup != row.end()) {
      const FeatureId feature = feature_ids[*dup];
      const std::size_t r = static_cast<std::size_t>(&row - rows.data());
      std::size_t where = line_no;
      for (std::size_t e = 0; e < pairs.size(); ++e) {
        if (pairs[e].first == r && pairs[e].second == feature) where = pair_lines[e];
      }
      throw ParseError(source, where,
                       "duplicate entry for document '" + doc_ids[r] + "', feature " + std::to_string(feature));
    }
  }
  return FeatureMatrix(std::move(doc_ids), std::move(feature_ids), std::move(rows), std::move(dropped),
                       std::move(provenance));
}

FeatureMatrix load_dictionary_file(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return parse_dictionary(in, path.string());
}

void write_dictionary(const FeatureMatrix& matrix, std::ostream& out) {
  std::size_t p_declared = matrix.provenance().declared_features;
  for (FeatureId id : matrix.feature_ids()) p_declared = std::max<std::size_t>(p_declared, std::size_t{id} + 1);
  for (FeatureId id : matrix.dropped_features()) p_declared = std::max<std::size_t>(p_declared, std::size_t{id} + 1);

  const Provenance& provenance = matrix.provenance();
  if (provenance.source.find_first_of("\t\n\r") != std::string::npos ||
      provenance.pooling.find_first_of("\t\n\r") != std::string::npos) {
    throw ValidationError("provenance text contains a tab or line break");
  }
  out << "DICT v1 n=" << matrix.n_docs() << " p_declared=" << p_declared << '\n';
  out << "#provenance\tpooling=" << provenance.pooling << "\tthreshold=" << tsv::format_double(provenance.threshold)
      << "\tsource=" << provenance.source << '\n';
  for (const std::string& id : matrix.doc_ids()) {
    check_doc_id(id);
    out << "#doc\t" << id << '\n';
  }
  bool identity = matrix.p() == p_declared;
  for (std::size_t j = 0; identity && j < matrix.p(); ++j) identity = matrix.feature_ids()[j] == j;
  if (!identity) out << "#features\t" << join_ids(matrix.feature_ids()) << '\n';
  if (!matrix.dropped_features().empty()) out << "#dropped\t" << join_ids(matrix.dropped_features()) << '\n';
  for (std::size_t i = 0; i < matrix.n_docs(); ++i) {
    for (std::uint32_t column : matrix.rows()[i]) {
      out << matrix.doc_ids()[i] << '\t' << matrix.feature_ids()[column] << '\n';
    }
  }
}

void write_dictionary_file(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write '" + path.string() + "'");
  write_dictionary(matrix, out);
}

}  // namespace discovery
