#pragma once

// Gaussian multiplier bootstrap of the k-max statistic.
//
// Draw b is the vector S^b with coordinates
//   S^b_j = n^{-1/2} * sum_i xi_i^b (X_ij - mean_j) * scale_j,
// where scale_j = 1/sqrt(sigma_jj) when studentized and 1 otherwise, and the
// multiplier xi_i^b is a standard normal that depends only on (seed, b, i).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "discovery/transforms.hpp"

namespace discovery {

enum class Side { one_sided, two_sided };
enum class Retention { in_memory, recompute };

std::string to_string(Side side);
Side parse_side(std::string_view text);
std::string to_string(Retention retention);
Retention parse_retention(std::string_view text);

struct BootstrapConfig {
  std::size_t n_draws = 1000;
  std::uint64_t seed = 0;
  Side side = Side::two_sided;
  bool studentize = true;
  Retention retention = Retention::in_memory;
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
  // Worker threads; 0 uses every hardware thread.
  unsigned threads = 0;

  void validate() const;
};

// Multiplier xi_i^b for draw b and row i.
double bootstrap_multiplier(std::uint64_t seed, std::size_t draw, std::size_t row);

// k-th largest entry counting multiplicity.
double k_max(std::span<const double> x, std::size_t k);

class BootstrapRun {
 public:
  using BlockFn = std::function<void(std::size_t first_draw, std::size_t count, const double* block)>;

  // Wraps precomputed draws (B x columns.size(), draw-major), e.g. from a cache
  // file or a test stub.
  static BootstrapRun from_draws(BootstrapConfig config, std::string estim_fingerprint,
                                 std::vector<std::size_t> columns, std::vector<double> draws);

  const BootstrapConfig& config() const noexcept { return config_; }
  const std::string& estim_fingerprint() const noexcept { return estim_fingerprint_; }
  std::size_t n_draws() const noexcept { return config_.n_draws; }
  // Matrix columns covered by the run, increasing.
  const std::vector<std::size_t>& columns() const noexcept { return columns_; }
  std::size_t width() const noexcept { return columns_.size(); }
  std::optional<std::size_t> local_index(std::size_t column) const;
  bool retained() const noexcept { return !draws_.empty() || !engine_; }

  // Visits every draw in increasing order, in blocks of consecutive draws laid
  // out draw-major (count x width()).
  void for_each_block(const BlockFn& fn) const;
  std::vector<double> draw(std::size_t b) const;

  // Cache file: one text header line
  //   BOOT v1 B=<B> p=<width> seed=<seed> hash=<run key>
  // followed by B * width little-endian float64 values, draw-major.
  void save_cache(const std::filesystem::path& path) const;
  // Returns nullopt when the file is missing or was written for another run.
  static std::optional<BootstrapRun> load_cache(const std::filesystem::path& path, const BootstrapConfig& config,
                                                const std::string& estim_fingerprint,
                                                const std::vector<std::size_t>& columns);
  std::string run_key() const;

 private:
  friend BootstrapRun run_bootstrap(std::shared_ptr<const TransformedMatrix>, const FeatureEstimates&,
                                    const BootstrapConfig&);
  struct Engine;

  BootstrapRun() = default;
  void compute_block(std::size_t first, std::size_t count, double* out) const;

  BootstrapConfig config_;
  std::string estim_fingerprint_;
  std::vector<std::size_t> columns_;
  std::vector<double> draws_;
  std::shared_ptr<const Engine> engine_;
};

// Bootstraps every testable feature of `est`. Throws InferenceError when none
// is testable or when `est` was not computed from `x`.
BootstrapRun run_bootstrap(std::shared_ptr<const TransformedMatrix> x, const FeatureEstimates& est,
                           const BootstrapConfig& config);
BootstrapRun run_bootstrap(const TransformedMatrix& x, const FeatureEstimates& est, const BootstrapConfig& config);

struct CriticalValue {
  double value = 0.0;
  double alpha = 0.05;
  std::size_t k = 1;
  // Matrix columns forming K; empty with `full` set means every column of the run.
  bool full = true;
  std::vector<std::size_t> subset;
  std::size_t subset_size = 0;
};

// 1-based rank of the order statistic used as the (1 - alpha) quantile of B
// draws: ceil(B (1 - alpha)), clamped to [1, B].
std::size_t quantile_rank(std::size_t n_draws, double alpha);

// Per-draw k-max over the columns in `subset` (all columns when nullopt), of
// |S| for two-sided runs and S otherwise.
std::vector<double> kmax_statistics(const BootstrapRun& run, std::optional<std::span<const std::size_t>> subset,
                                    std::size_t k);

// Ascending order statistic of rank quantile_rank(stats.size(), alpha).
double upper_quantile(std::vector<double> stats, double alpha);

CriticalValue critical_value(const BootstrapRun& run, std::span<const std::size_t> subset, double alpha,
                             std::size_t k);
CriticalValue critical_value(const BootstrapRun& run, double alpha, std::size_t k);

// k-th largest of `values` restricted to `indices` (absolute values when
// `absolute`), using `scratch` as workspace.
double kth_largest(const double* values, std::span<const std::size_t> indices, std::size_t k, bool absolute,
                   std::vector<double>& scratch);

}  // namespace discovery
