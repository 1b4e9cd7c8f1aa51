#pragma once

// Synthetic designs with known truth and Monte Carlo measurements of
// k-FWER, power, interval coverage and the k-max normal approximation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "discovery/bootstrap.hpp"
#include "discovery/data_model.hpp"
#include "discovery/inference.hpp"
#include "discovery/philox.hpp"
#include "discovery/scoring.hpp"
#include "discovery/transforms.hpp"

namespace discovery {

enum class CorrelationKind { independent, equicorrelated, block };

struct Correlation {
  CorrelationKind kind = CorrelationKind::independent;
  double rho = 0.0;
  std::size_t block_size = 0;
};

struct PlantedEffect {
  std::size_t feature = 0;
  double size = 0.0;
};

// Binary features Y_ij = 1{ sqrt(rho) G_i,b(j) + sqrt(1 - rho) E_ij > tau_j }
// with independent standard normal G and E, so P(Y_ij = 1) is the feature's
// activation probability. Under the HT kind, W_i ~ Bernoulli(pi) and a planted
// effect theta moves the activation probability to s + (1 - pi) theta under
// treatment and s - pi theta under control, so s stays the marginal rate and
// theta is the average treatment effect.
struct DgpSpec {
  std::string id = "spec";
  std::size_t n = 500;
  std::size_t p = 100;
  // One value for every feature, or one per feature.
  std::vector<double> sparsity{0.1};
  Correlation correlation;
  std::vector<PlantedEffect> effects;
  TransformKind kind = TransformKind::ht_diff_in_means;
  double pi = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  double sparsity_of(std::size_t feature) const;
  // Population mean of each transformed column.
  std::vector<double> true_theta() const;
  // Columns whose HT null hypothesis holds. Empty for the mean kind.
  std::vector<char> null_mask() const;
};

// Streams rows of a design; row i under key K is a pure function of (K, i).
class DgpSampler {
 public:
  explicit DgpSampler(const DgpSpec& spec);
  // Sets w (0/1, or 0 for the mean kind) and the increasing active columns.
  void draw_row(rng::Key key, std::size_t row, double& w, std::vector<std::uint32_t>& active) const;

 private:
  const DgpSpec* spec_;
  double sqrt_rho_ = 0.0;
  double sqrt_one_minus_rho_ = 1.0;
  std::size_t block_size_ = 1;
  std::vector<std::uint32_t> class_of_;
  // Latent thresholds per class, indexed [w][class].
  std::vector<double> tau_[2];
  // Cut points for rho == 0, indexed [w][class].
  std::vector<double> cut_[2];
};

struct SimDataset {
  FeatureMatrix y;
  std::vector<double> w;
  std::vector<double> theta;
  std::vector<char> is_null;
};

SimDataset simulate_dataset(const DgpSpec& spec, std::size_t rep);

struct McResult {
  std::size_t reps = 0;
  InferenceConfig config;
  double empirical_k_fwer = 0.0;
  double mc_standard_error = 0.0;
  // One entry per planted effect, in DgpSpec::effects order.
  std::vector<double> per_effect_power;
  std::optional<double> ks_distance;
  // Per rep: size of the selected set and number of false rejections.
  std::vector<std::size_t> selected_counts;
  std::vector<std::size_t> false_rejections;
};

// sqrt(r (1 - r) / reps).
double binomial_standard_error(double rate, std::size_t reps);

// Runs the whole estimate-bootstrap-select pipeline on `reps` simulated
// datasets. Every configuration is evaluated on the same draws of each rep.
// Rep r uses bootstrap seed derive_seed(bootstrap.seed, r).
std::vector<McResult> estimate_k_fwer(const DgpSpec& spec, std::span<const InferenceConfig> configs,
                                      const BootstrapConfig& bootstrap, std::size_t reps, unsigned threads = 0);
McResult estimate_k_fwer(const DgpSpec& spec, const InferenceConfig& config, const BootstrapConfig& bootstrap,
                         std::size_t reps, unsigned threads = 0);

// Population correlation matrix of the transformed columns, estimated from
// `rows` simulated rows (row-major p x p).
std::vector<double> simulated_correlation(const DgpSpec& spec, std::size_t rows, unsigned threads = 0);

// k-max of `draws` vectors from N(0, corr), one-sided or absolute.
std::vector<double> gaussian_kmax_sample(std::span<const double> corr, std::size_t p, std::size_t k, Side side,
                                         std::size_t draws, std::uint64_t seed, unsigned threads = 0);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

struct KsOptions {
  Side side = Side::one_sided;
  std::size_t correlation_rows = 1000000;
  unsigned threads = 0;
};

// Distance between the law of the k-max of sqrt(n)(theta_hat - theta)/sigma_hat
// over `reps` datasets and the Gaussian k-max with the simulated correlation.
double ks_distance_studentized_kmax(const DgpSpec& spec, std::size_t k, std::size_t reps, std::size_t oracle_draws,
                                    const KsOptions& options = {});

// Distance between the bootstrap law of the studentized k-max on one dataset
// (rep 0) and the Gaussian k-max.
double ks_distance_bootstrap_kmax(const DgpSpec& spec, std::size_t k, const BootstrapConfig& bootstrap,
                                  std::size_t oracle_draws, const KsOptions& options = {});

struct CoverageResult {
  std::size_t reps = 0;
  // Reps where the estimate was defined.
  std::size_t defined = 0;
  double coverage = 0.0;
  double mc_standard_error = 0.0;
};

// Tables of m rows with agreement probability q.
CoverageResult accuracy_coverage(double q, std::size_t m, std::size_t reps, double alpha_ci, IntervalMethod method,
                                 std::uint64_t seed);

// Tables of m rows with P(y_true=1) = q_true, P(y_pred=1) = q_pred and
// P(both) = q_both.
CoverageResult precision_coverage(double q_true, double q_pred, double q_both, std::size_t m, std::size_t reps,
                                  double alpha_ci, IntervalMethod method, std::uint64_t seed);
CoverageResult recall_coverage(double q_true, double q_pred, double q_both, std::size_t m, std::size_t reps,
                               double alpha_ci, IntervalMethod method, std::uint64_t seed);

// ---- grids ---------------------------------------------------------------

struct GridEntry {
  DgpSpec spec;
  std::vector<InferenceConfig> configs;
  BootstrapConfig bootstrap;
  std::size_t reps = 200;
};

std::vector<GridEntry> load_grid(const std::filesystem::path& path);
std::vector<GridEntry> parse_grid(std::string_view text, const std::string& source);

using GridProgress = std::function<void(const GridEntry&, std::size_t index, std::size_t total)>;
std::vector<std::pair<const GridEntry*, McResult>> run_grid(const std::vector<GridEntry>& grid, unsigned threads,
                                                            const GridProgress& progress = {});

// Columns: spec_id, alpha, k, method, reps, empirical_k_fwer, se,
// mean_selected, power (feature=rate pairs separated by ';', or NA).
void write_grid_results(const std::vector<std::pair<const GridEntry*, McResult>>& results, std::ostream& out);

}  // namespace discovery
