#pragma once

// Transformed matrix X = h(W, Y) and per-feature plug-in estimates.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "discovery/data_model.hpp"

namespace discovery {

enum class TransformKind { mean, ht_diff_in_means };
enum class PiSource { fixed, estimated };

struct TransformSpec {
  TransformKind kind = TransformKind::mean;
  double pi = 0.5;
  PiSource pi_source = PiSource::fixed;
};

std::string to_string(TransformKind kind);
TransformKind parse_transform_kind(std::string_view text);

// n x p real matrix in compressed sparse column form. Structural zeros are
// never stored; row indices increase within each column.
class TransformedMatrix {
 public:
  TransformedMatrix() = default;
  TransformedMatrix(std::size_t n, std::vector<FeatureId> feature_ids, std::vector<std::size_t> col_ptr,
                    std::vector<std::uint32_t> row_idx, std::vector<double> values,
                    std::vector<std::size_t> source_rows = {});

  // Builds from a column-major dense array of n * feature_ids.size() values.
  static TransformedMatrix from_dense(std::size_t n, std::vector<FeatureId> feature_ids,
                                      std::span<const double> column_major);

  std::size_t n() const noexcept { return n_; }
  std::size_t p() const noexcept { return feature_ids_.size(); }
  const std::vector<FeatureId>& feature_ids() const noexcept { return feature_ids_; }
  const std::vector<std::size_t>& col_ptr() const noexcept { return col_ptr_; }
  const std::vector<std::uint32_t>& row_idx() const noexcept { return row_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }
  // Row r of X came from row source_rows()[r] of the source matrix.
  const std::vector<std::size_t>& source_rows() const noexcept { return source_rows_; }
  // The value of pi used by an HT transform; 0 for the mean kind.
  double pi_used() const noexcept { return pi_used_; }
  void set_pi_used(double pi) noexcept { pi_used_ = pi; }

  double at(std::size_t row, std::size_t column) const;
  std::size_t nonzeros(std::size_t column) const { return col_ptr_.at(column + 1) - col_ptr_.at(column); }

  // SHA-256 over dimensions, feature ids and every stored entry.
  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  std::size_t n_ = 0;
  std::vector<FeatureId> feature_ids_;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<std::uint32_t> row_idx_;
  std::vector<double> values_;
  std::vector<std::size_t> source_rows_;
  double pi_used_ = 0.0;
  std::string fingerprint_;
};

struct FeatureEstimates {
  std::vector<FeatureId> feature_ids;
  std::vector<double> theta_hat;
  std::vector<double> sigma_hat_diag;
  std::vector<double> t_stats;
  // testable[j] is false when sigma_hat_diag[j] == 0; such features carry a
  // zero t-stat and are excluded from inference.
  std::vector<bool> testable;
  bool studentized = true;
  std::size_t n = 0;
  std::string fingerprint;

  std::size_t p() const noexcept { return theta_hat.size(); }
  std::vector<std::size_t> testable_columns() const;
};

// X restricted to the rows in `scope`. `w` is indexed like the matrix rows and
// may be empty for the mean kind.
TransformedMatrix apply_transform(const FeatureMatrix& matrix, std::span<const double> w, const TransformSpec& spec,
                                  std::span<const std::size_t> scope);

// Column means, 1/n variances and t-statistics.
FeatureEstimates estimate_features(const TransformedMatrix& x, bool studentize, unsigned threads = 1);

}  // namespace discovery
