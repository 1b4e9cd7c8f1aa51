#include "discovery/transforms.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "discovery/error.hpp"
#include "discovery/hashing.hpp"
#include "discovery/parallel.hpp"

namespace discovery {

std::string to_string(TransformKind kind) {
  return kind == TransformKind::mean ? "mean" : "ht_diff_in_means";
}

TransformKind parse_transform_kind(std::string_view text) {
  if (text == "mean") return TransformKind::mean;
  if (text == "ht_diff_in_means") return TransformKind::ht_diff_in_means;
  throw ConfigError("unknown transform kind '" + std::string(text) + "'");
}

TransformedMatrix::TransformedMatrix(std::size_t n, std::vector<FeatureId> feature_ids,
                                     std::vector<std::size_t> col_ptr, std::vector<std::uint32_t> row_idx,
                                     std::vector<double> values, std::vector<std::size_t> source_rows)
    : n_(n),
      feature_ids_(std::move(feature_ids)),
      col_ptr_(std::move(col_ptr)),
      row_idx_(std::move(row_idx)),
      values_(std::move(values)),
      source_rows_(std::move(source_rows)) {
  const std::size_t p = feature_ids_.size();
  if (col_ptr_.size() != p + 1 || col_ptr_.front() != 0 || col_ptr_.back() != row_idx_.size() ||
      row_idx_.size() != values_.size()) {
    throw ValidationError("inconsistent sparse column layout");
  }
  if (source_rows_.empty()) {
    source_rows_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) source_rows_[i] = i;
  } else if (source_rows_.size() != n_) {
    throw ValidationError("row mapping length differs from n");
  }
  for (std::size_t j = 0; j < p; ++j) {
    if (col_ptr_[j + 1] < col_ptr_[j]) throw ValidationError("column pointers must be nondecreasing");
    for (std::size_t e = col_ptr_[j]; e < col_ptr_[j + 1]; ++e) {
      if (row_idx_[e] >= n_) throw ValidationError("row index out of range");
      if (e > col_ptr_[j] && row_idx_[e] <= row_idx_[e - 1]) {
        throw ValidationError("row indices must increase within a column");
      }
      if (!std::isfinite(values_[e])) throw ValidationError("transformed matrix entries must be finite");
    }
  }

  Sha256 hasher;
  hasher.update("X v1");
  hasher.update_u64(n_);
  hasher.update_u64(p);
  for (FeatureId id : feature_ids_) hasher.update_u64(id);
  for (std::size_t ptr : col_ptr_) hasher.update_u64(ptr);
  for (std::uint32_t row : row_idx_) hasher.update_u64(row);
  for (double value : values_) hasher.update_f64(value);
  fingerprint_ = hasher.hex_digest();
}

TransformedMatrix TransformedMatrix::from_dense(std::size_t n, std::vector<FeatureId> feature_ids,
                                                std::span<const double> column_major) {
  const std::size_t p = feature_ids.size();
  if (column_major.size() != n * p) throw ValidationError("dense matrix size mismatch");
  std::vector<std::size_t> col_ptr{0};
  std::vector<std::uint32_t> rows;
  std::vector<double> values;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = column_major[j * n + i];
      if (v != 0.0) {
        rows.push_back(static_cast<std::uint32_t>(i));
        values.push_back(v);
      }
    }
    col_ptr.push_back(rows.size());
  }
  return TransformedMatrix(n, std::move(feature_ids), std::move(col_ptr), std::move(rows), std::move(values));
}

double TransformedMatrix::at(std::size_t row, std::size_t column) const {
  const auto begin = row_idx_.begin() + static_cast<std::ptrdiff_t>(col_ptr_.at(column));
  const auto end = row_idx_.begin() + static_cast<std::ptrdiff_t>(col_ptr_.at(column + 1));
  const auto it = std::lower_bound(begin, end, static_cast<std::uint32_t>(row));
  if (it == end || *it != row) return 0.0;
  return values_[static_cast<std::size_t>(it - row_idx_.begin())];
}

std::vector<std::size_t> FeatureEstimates::testable_columns() const {
  std::vector<std::size_t> columns;
  for (std::size_t j = 0; j < testable.size(); ++j) {
    if (testable[j]) columns.push_back(j);
  }
  return columns;
}

TransformedMatrix apply_transform(const FeatureMatrix& matrix, std::span<const double> w, const TransformSpec& spec,
                                  std::span<const std::size_t> scope) {
  if (scope.empty()) throw ValidationError("transform scope is empty");
  for (std::size_t i : scope) {
    if (i >= matrix.n_docs()) throw ValidationError("transform scope row out of range");
  }

  double coef_treated = 1.0;
  double coef_control = 1.0;
  double pi_used = 0.0;
  if (spec.kind == TransformKind::ht_diff_in_means) {
    if (w.size() != matrix.n_docs()) {
      throw ValidationError("covariate vector has " + std::to_string(w.size()) + " entries for " +
                            std::to_string(matrix.n_docs()) + " documents");
    }
    std::size_t treated = 0;
    for (std::size_t i : scope) {
      if (w[i] != 0.0 && w[i] != 1.0) {
        throw ValidationError("HT transform needs a binary treatment; document '" + matrix.doc_ids()[i] +
                              "' has w=" + std::to_string(w[i]));
      }
      treated += w[i] == 1.0;
    }
    if (spec.pi_source == PiSource::estimated) {
      if (treated == 0 || treated == scope.size()) {
        throw ValidationError("cannot estimate pi: every document in scope has the same treatment");
      }
      pi_used = static_cast<double>(treated) / static_cast<double>(scope.size());
      spdlog::warn("pi estimated from the sample as {}; the HT transform assumes a fixed design probability",
                   pi_used);
    } else {
      if (!(spec.pi > 0.0 && spec.pi < 1.0)) throw ConfigError("pi must lie strictly between 0 and 1");
      pi_used = spec.pi;
    }
    const double denom = pi_used * (1.0 - pi_used);
    coef_treated = (1.0 - pi_used) / denom;
    coef_control = (0.0 - pi_used) / denom;
  }

  const std::size_t p = matrix.p();
  std::vector<std::size_t> col_ptr(p + 1, 0);
  for (std::size_t i : scope) {
    for (std::uint32_t column : matrix.rows()[i]) ++col_ptr[column + 1];
  }
  for (std::size_t j = 0; j < p; ++j) col_ptr[j + 1] += col_ptr[j];
  std::vector<std::size_t> fill(col_ptr.begin(), col_ptr.end() - 1);
  std::vector<std::uint32_t> rows(col_ptr.back());
  std::vector<double> values(col_ptr.back());
  for (std::size_t r = 0; r < scope.size(); ++r) {
    const std::size_t i = scope[r];
    double coef = 1.0;
    if (spec.kind == TransformKind::ht_diff_in_means) coef = w[i] == 1.0 ? coef_treated : coef_control;
    for (std::uint32_t column : matrix.rows()[i]) {
      const std::size_t slot = fill[column]++;
      rows[slot] = static_cast<std::uint32_t>(r);
      values[slot] = coef;
    }
  }
  TransformedMatrix x(scope.size(), matrix.feature_ids(), std::move(col_ptr), std::move(rows), std::move(values),
                      std::vector<std::size_t>(scope.begin(), scope.end()));
  x.set_pi_used(pi_used);
  return x;
}

FeatureEstimates estimate_features(const TransformedMatrix& x, bool studentize, unsigned threads) {
  if (x.n() < 2) throw ValidationError("feature estimates need at least 2 rows");
  const std::size_t p = x.p();
  const double n = static_cast<double>(x.n());
  const double root_n = std::sqrt(n);

  FeatureEstimates est;
  est.theta_hat.assign(p, 0.0);
  est.sigma_hat_diag.assign(p, 0.0);
  est.t_stats.assign(p, 0.0);
  std::vector<char> ok(p, 0);
  est.studentized = studentize;
  est.n = x.n();
  est.fingerprint = x.fingerprint();
  est.feature_ids = x.feature_ids();

  const auto& col_ptr = x.col_ptr();
  const auto& values = x.values();
  parallel_for(p, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      double sum = 0.0;
      for (std::size_t e = col_ptr[j]; e < col_ptr[j + 1]; ++e) sum += values[e];
      const double mean = sum / n;
      double ss = 0.0;
      for (std::size_t e = col_ptr[j]; e < col_ptr[j + 1]; ++e) {
        const double d = values[e] - mean;
        ss += d * d;
      }
      const double zeros = n - static_cast<double>(col_ptr[j + 1] - col_ptr[j]);
      ss += zeros * (mean * mean);
      const double var = ss / n;
      est.theta_hat[j] = mean;
      est.sigma_hat_diag[j] = var;
      if (var > 0.0) {
        ok[j] = 1;
        est.t_stats[j] = studentize ? root_n * mean / std::sqrt(var) : root_n * mean;
      }
    }
  });
  est.testable.assign(ok.begin(), ok.end());
  return est;
}

}  // namespace discovery
