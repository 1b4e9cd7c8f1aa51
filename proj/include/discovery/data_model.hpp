#pragma once

// Documents, raw dictionary activations, and the binary feature matrix
// Y_i = Dict(Z_i) built from them by max-pooling over tokens and thresholding.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace discovery {

using FeatureId = std::uint32_t;

struct Document {
  std::string doc_id;
  std::optional<std::string> text;
  // Treatment indicator or scalar covariate W_i.
  std::optional<double> covariate_w;
  std::size_t token_count = 0;
  // Explicit token strings; when empty and `text` is set, tokens are the
  // whitespace-separated words of `text`.
  std::vector<std::string> tokens;
};

// Byte range of one token inside the rendered document text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> documents);

  std::size_t size() const noexcept { return documents_.size(); }
  const Document& at(std::size_t index) const { return documents_.at(index); }
  std::span<const Document> documents() const noexcept { return documents_; }
  std::optional<std::size_t> index_of(std::string_view doc_id) const;

  // W_i for every document, in corpus order. Throws ValidationError naming
  // the first document without a covariate.
  std::vector<double> covariates() const;

  // Text of a document as shown to an LLM, and the byte span of each token
  // within it.
  std::string rendered_text(std::size_t index) const;
  std::vector<TokenSpan> token_spans(std::size_t index) const;

 private:
  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct ActivationRecord {
  std::string doc_id;
  FeatureId feature_id = 0;
  std::uint32_t token_index = 0;
  double value = 0.0;
};

// Per-(document, feature) maximum over tokens, with the earliest token that
// attains it.
struct PooledActivation {
  FeatureId feature_id = 0;
  double max_value = 0.0;
  std::uint32_t argmax_token = 0;
};

// Max-pooled activations for a corpus: the sufficient statistic for both
// binarization and exemplar extraction.
class ActivationSummary {
 public:
  explicit ActivationSummary(const Corpus& corpus);

  // Validates and folds one record. Throws IngestionError for an unknown
  // doc_id and ValidationError for a negative value or an out-of-range token.
  void add(const ActivationRecord& record);

  const Corpus& corpus() const noexcept { return *corpus_; }
  std::size_t n_docs() const noexcept { return per_doc_.size(); }
  // Pooled entries of one document sorted by feature id.
  std::vector<PooledActivation> pooled(std::size_t doc_index) const;
  // Every feature id that appeared in any record, strictly increasing.
  std::vector<FeatureId> seen_features() const;

 private:
  const Corpus* corpus_;
  std::vector<std::unordered_map<FeatureId, PooledActivation>> per_doc_;
};

struct Provenance {
  std::string pooling = "max";
  double threshold = 0.0;
  std::string source;
  // Size of the upstream dictionary; 0 when unknown.
  std::size_t declared_features = 0;

  bool operator==(const Provenance&) const = default;
};

// n x p binary matrix stored as sorted column positions per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::vector<std::string> doc_ids, std::vector<FeatureId> feature_ids,
                std::vector<std::vector<std::uint32_t>> rows, std::vector<FeatureId> dropped,
                Provenance provenance);

  std::size_t n_docs() const noexcept { return doc_ids_.size(); }
  std::size_t p() const noexcept { return feature_ids_.size(); }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::vector<FeatureId>& feature_ids() const noexcept { return feature_ids_; }
  const std::vector<std::vector<std::uint32_t>>& rows() const noexcept { return rows_; }
  const std::vector<FeatureId>& dropped_features() const noexcept { return dropped_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  bool at(std::size_t row, std::size_t column) const;
  std::optional<std::size_t> column_of(FeatureId feature_id) const;
  std::size_t nonzeros() const;

  // Number of ones per column over the given rows.
  std::vector<std::size_t> column_counts(std::span<const std::size_t> scope) const;

  // Matrix restricted to the given rows, in the given order.
  FeatureMatrix subset_rows(std::span<const std::size_t> scope) const;

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::vector<std::string> doc_ids_;
  std::vector<FeatureId> feature_ids_;
  std::vector<std::vector<std::uint32_t>> rows_;
  std::vector<FeatureId> dropped_;
  Provenance provenance_;
};

struct SplitIndices {
  std::vector<std::size_t> estim;
  std::vector<std::size_t> eval;
  std::uint64_t seed = 0;
};

// Entry (i, j) is 1 iff the maximum activation of feature j over the tokens
// of document i is strictly greater than `threshold`.
FeatureMatrix pool_and_binarize(const ActivationSummary& summary, double threshold);
FeatureMatrix pool_and_binarize(std::span<const ActivationRecord> records, const Corpus& corpus,
                                double threshold);

// Keeps exactly the features with at least one nonzero entry among `scope`.
FeatureMatrix drop_degenerate(const FeatureMatrix& matrix, std::span<const std::size_t> scope);

// Uniformly random partition with |eval| = round(eval_fraction * n_total).
SplitIndices split_sample(std::size_t n_total, double eval_fraction, std::uint64_t seed);

// ---- file formats -------------------------------------------------------

// JSON lines with fields `doc_id`, `w`, `text` and optionally `tokens`.
Corpus read_corpus_jsonl(const std::filesystem::path& path);
Corpus parse_corpus_jsonl(std::istream& in, const std::string& source);

// `doc_id<TAB>feature_id<TAB>token_index<TAB>value`, one record per line.
void read_activations_tsv(std::istream& in, const std::string& source, ActivationSummary& summary);
void read_activations_tsv(const std::filesystem::path& path, ActivationSummary& summary);
std::vector<ActivationRecord> parse_activations_tsv(std::istream& in, const std::string& source);

// Sparse dictionary file; see README for the layout.
FeatureMatrix load_dictionary_file(const std::filesystem::path& path);
FeatureMatrix parse_dictionary(std::istream& in, const std::string& source);
void write_dictionary(const FeatureMatrix& matrix, std::ostream& out);
void write_dictionary_file(const FeatureMatrix& matrix, const std::filesystem::path& path);

}  // namespace discovery
