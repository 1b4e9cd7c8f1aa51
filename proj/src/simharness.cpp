#include "discovery/simharness.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <toml.hpp>

#include "discovery/error.hpp"
#include "discovery/parallel.hpp"
#include "discovery/tsv.hpp"

namespace discovery {

namespace {

constexpr double kTwoPow32 = 4294967296.0;

double unit32(std::uint32_t word) { return (static_cast<double>(word) + 0.5) / kTwoPow32; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_upper_quantile(double prob) {
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(boost::math::complement(standard, prob));
}

// Probability that feature j activates given treatment w.
double activation_probability(const DgpSpec& spec, double sparsity, double effect, int w) {
  if (spec.kind == TransformKind::mean) return sparsity;
  return w == 1 ? sparsity + (1.0 - spec.pi) * effect : sparsity - spec.pi * effect;
}

// Distinct oracle stream; no rep index reaches this value.
constexpr std::uint64_t kOracleStream = 0xFFFFFFFF0000A001ull;

}  // namespace

// ---- DgpSpec --------------------------------------------------------------

void DgpSpec::validate() const {
  if (n < 2) throw ConfigError("spec '" + id + "': n must be at least 2");
  if (p < 1) throw ConfigError("spec '" + id + "': p must be at least 1");
  if (sparsity.size() != 1 && sparsity.size() != p) {
    throw ConfigError("spec '" + id + "': sparsity needs 1 or p values");
  }
  for (double s : sparsity) {
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("spec '" + id + "': activation probabilities must lie in (0, 1)");
  }
  switch (correlation.kind) {
    case CorrelationKind::independent:
      if (correlation.rho != 0.0) throw ConfigError("spec '" + id + "': independent features take no rho");
      break;
    case CorrelationKind::block:
      if (correlation.block_size < 1) throw ConfigError("spec '" + id + "': block size must be positive");
      [[fallthrough]];
    case CorrelationKind::equicorrelated:
      if (!(correlation.rho >= 0.0 && correlation.rho < 1.0)) {
        throw ConfigError("spec '" + id + "': rho must lie in [0, 1)");
      }
      break;
  }
  if (kind == TransformKind::ht_diff_in_means && !(pi > 0.0 && pi < 1.0)) {
    throw ConfigError("spec '" + id + "': pi must lie in (0, 1)");
  }
  if (kind == TransformKind::mean && !effects.empty()) {
    throw ConfigError("spec '" + id + "': planted effects need the ht_diff_in_means kind");
  }
  if (!effects.empty() && effects.size() >= p) throw ConfigError("spec '" + id + "': too many planted effects");
  std::vector<char> seen(p, 0);
  for (const PlantedEffect& effect : effects) {
    if (effect.feature >= p) throw ConfigError("spec '" + id + "': effect feature out of range");
    if (seen[effect.feature]++) throw ConfigError("spec '" + id + "': feature planted twice");
    const double s = sparsity_of(effect.feature);
    for (int w = 0; w <= 1; ++w) {
      const double prob = activation_probability(*this, s, effect.size, w);
      if (!(prob > 0.0 && prob < 1.0)) {
        throw ValidationError("spec '" + id + "': effect " + tsv::format_double(effect.size) + " on feature " +
                              std::to_string(effect.feature) + " with sparsity " + tsv::format_double(s) +
                              " pushes an activation probability outside (0, 1)");
      }
    }
  }
}

double DgpSpec::sparsity_of(std::size_t feature) const {
  return sparsity.size() == 1 ? sparsity.front() : sparsity.at(feature);
}

std::vector<double> DgpSpec::true_theta() const {
  std::vector<double> theta(p, 0.0);
  if (kind == TransformKind::mean) {
    for (std::size_t j = 0; j < p; ++j) theta[j] = sparsity_of(j);
  } else {
    for (const PlantedEffect& effect : effects) theta[effect.feature] = effect.size;
  }
  return theta;
}

std::vector<char> DgpSpec::null_mask() const {
  if (kind == TransformKind::mean) return {};
  std::vector<char> mask(p, 1);
  for (const PlantedEffect& effect : effects) mask[effect.feature] = effect.size == 0.0;
  return mask;
}

// ---- DgpSampler -----------------------------------------------------------

DgpSampler::DgpSampler(const DgpSpec& spec) : spec_(&spec) {
  spec.validate();
  const double rho = spec.correlation.kind == CorrelationKind::independent ? 0.0 : spec.correlation.rho;
  sqrt_rho_ = std::sqrt(rho);
  sqrt_one_minus_rho_ = std::sqrt(1.0 - rho);
  block_size_ = spec.correlation.kind == CorrelationKind::block ? spec.correlation.block_size : spec.p;

  std::vector<double> effect(spec.p, 0.0);
  for (const PlantedEffect& e : spec.effects) effect[e.feature] = e.size;
  std::map<std::pair<double, double>, std::uint32_t> classes;
  class_of_.resize(spec.p);
  for (std::size_t j = 0; j < spec.p; ++j) {
    const auto key = std::make_pair(spec.sparsity_of(j), effect[j]);
    auto [it, inserted] = classes.try_emplace(key, static_cast<std::uint32_t>(classes.size()));
    if (inserted) {
      for (int w = 0; w <= 1; ++w) {
        const double prob = activation_probability(spec, key.first, key.second, w);
        tau_[w].push_back(normal_upper_quantile(prob));
        cut_[w].push_back(1.0 - prob);
      }
    }
    class_of_[j] = it->second;
  }
}

void DgpSampler::draw_row(rng::Key key, std::size_t row, double& w, std::vector<std::uint32_t>& active) const {
  const DgpSpec& spec = *spec_;
  const auto i = static_cast<std::uint32_t>(row);
  active.clear();
  int treated = 0;
  if (spec.kind == TransformKind::ht_diff_in_means) {
    const rng::Counter block = rng::philox4x32({i, 0, 0, rng::tag::kSimTreatment}, key);
    treated = unit32(block[0]) < spec.pi ? 1 : 0;
  }
  w = treated;

  const std::vector<double>& cut_by_class = cut_[treated];
  const std::vector<double>& tau = tau_[treated];
  const bool latent_factor = sqrt_rho_ > 0.0;
  std::vector<double> block_cut;
  std::vector<std::size_t> stamp;
  if (latent_factor) {
    block_cut.resize(tau.size());
    stamp.assign(tau.size(), static_cast<std::size_t>(-1));
  }
  double factor = 0.0;
  std::size_t current_block = static_cast<std::size_t>(-1);

  rng::Counter noise{};
  for (std::size_t j = 0; j < spec.p; ++j) {
    if ((j & 3) == 0) noise = rng::philox4x32({i, static_cast<std::uint32_t>(j >> 2), 0, rng::tag::kSimNoise}, key);
    const std::uint32_t c = class_of_[j];
    double cut = 0.0;
    if (!latent_factor) {
      cut = cut_by_class[c];
    } else {
      const std::size_t b = j / block_size_;
      if (b != current_block) {
        current_block = b;
        const rng::NormalPair pair =
            rng::normal_pair({i, static_cast<std::uint32_t>(b >> 1), 0, rng::tag::kSimFactor}, key);
        factor = (b & 1) ? pair.second : pair.first;
      }
      if (stamp[c] != b) {
        stamp[c] = b;
        block_cut[c] = normal_cdf((tau[c] - sqrt_rho_ * factor) / sqrt_one_minus_rho_);
      }
      cut = block_cut[c];
    }
    if (unit32(noise[j & 3]) > cut) active.push_back(static_cast<std::uint32_t>(j));
  }
}

SimDataset simulate_dataset(const DgpSpec& spec, std::size_t rep) {
  const DgpSampler sampler(spec);
  const rng::Key key = rng::Key::from(rng::derive_seed(spec.seed, rep));
  SimDataset data;
  std::vector<std::string> doc_ids(spec.n);
  std::vector<std::vector<std::uint32_t>> rows(spec.n);
  data.w.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    doc_ids[i] = std::to_string(i);
    sampler.draw_row(key, i, data.w[i], rows[i]);
  }
  std::vector<FeatureId> features(spec.p);
  for (std::size_t j = 0; j < spec.p; ++j) features[j] = static_cast<FeatureId>(j);
  Provenance provenance;
  provenance.source = "simulation:" + spec.id;
  provenance.declared_features = spec.p;
  data.y = FeatureMatrix(std::move(doc_ids), std::move(features), std::move(rows), {}, std::move(provenance));
  if (spec.kind == TransformKind::mean) data.w.clear();
  data.theta = spec.true_theta();
  data.is_null = spec.null_mask();
  return data;
}

// ---- k-FWER and power -----------------------------------------------------

double binomial_standard_error(double rate, std::size_t reps) {
  if (reps == 0) return 0.0;
  return std::sqrt(rate * (1.0 - rate) / static_cast<double>(reps));
}

namespace {

TransformedMatrix transform_all(const DgpSpec& spec, const SimDataset& data) {
  std::vector<std::size_t> scope(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) scope[i] = i;
  TransformSpec transform;
  transform.kind = spec.kind;
  transform.pi = spec.pi;
  return apply_transform(data.y, data.w, transform, scope);
}

}  // namespace

std::vector<McResult> estimate_k_fwer(const DgpSpec& spec, std::span<const InferenceConfig> configs,
                                      const BootstrapConfig& bootstrap, std::size_t reps, unsigned threads) {
  spec.validate();
  bootstrap.validate();
  if (configs.empty()) throw ConfigError("no inference configurations to evaluate");
  if (reps < 100) throw ConfigError("Monte Carlo estimates need at least 100 reps");
  for (const InferenceConfig& config : configs) config.validate();

  const std::size_t nc = configs.size();
  const std::size_t ne = spec.effects.size();
  std::vector<std::size_t> selected(reps * nc, 0);
  std::vector<std::size_t> false_rej(reps * nc, 0);
  std::vector<char> effect_hit(reps * nc * ne, 0);

  const unsigned workers = resolve_workers(threads);
  const unsigned inner_threads = workers > 1 ? 1 : bootstrap.threads;
  parallel_for(reps, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t rep = begin; rep < end; ++rep) {
      try {
        const SimDataset data = simulate_dataset(spec, rep);
        auto x = std::make_shared<const TransformedMatrix>(transform_all(spec, data));
        const FeatureEstimates est = estimate_features(*x, bootstrap.studentize, inner_threads);
        std::optional<BootstrapRun> runs[2];
        for (std::size_t c = 0; c < nc; ++c) {
          const InferenceConfig& config = configs[c];
          auto& run = runs[config.side == Side::two_sided ? 1 : 0];
          if (!run) {
            BootstrapConfig cfg = bootstrap;
            cfg.seed = rng::derive_seed(bootstrap.seed, rep);
            cfg.side = config.side;
            cfg.threads = inner_threads;
            run.emplace(run_bootstrap(x, est, cfg));
          }
          const InferenceReport report = select_features(est, *run, config);
          selected[rep * nc + c] = report.selected.size();
          std::size_t false_count = 0;
          for (FeatureId id : report.selected) {
            if (!data.is_null.empty() && data.is_null[id]) ++false_count;
          }
          false_rej[rep * nc + c] = false_count;
          for (std::size_t e = 0; e < ne; ++e) {
            effect_hit[(rep * nc + c) * ne + e] = report.features[spec.effects[e].feature].rejected;
          }
        }
      } catch (const Error& e) {
        throw Error(e.category(), "rep " + std::to_string(rep) + " of spec '" + spec.id + "': " + e.what());
      }
    }
  });

  std::vector<McResult> results(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    McResult& r = results[c];
    r.reps = reps;
    r.config = configs[c];
    std::size_t exceed = 0;
    r.per_effect_power.assign(ne, 0.0);
    for (std::size_t rep = 0; rep < reps; ++rep) {
      r.selected_counts.push_back(selected[rep * nc + c]);
      r.false_rejections.push_back(false_rej[rep * nc + c]);
      exceed += false_rej[rep * nc + c] >= configs[c].k;
      for (std::size_t e = 0; e < ne; ++e) r.per_effect_power[e] += effect_hit[(rep * nc + c) * ne + e];
    }
    r.empirical_k_fwer = static_cast<double>(exceed) / static_cast<double>(reps);
    r.mc_standard_error = binomial_standard_error(r.empirical_k_fwer, reps);
    for (double& power : r.per_effect_power) power /= static_cast<double>(reps);
  }
  return results;
}

McResult estimate_k_fwer(const DgpSpec& spec, const InferenceConfig& config, const BootstrapConfig& bootstrap,
                         std::size_t reps, unsigned threads) {
  return estimate_k_fwer(spec, std::span<const InferenceConfig>(&config, 1), bootstrap, reps, threads).front();
}

// ---- k-max normal approximation --------------------------------------------

std::vector<double> simulated_correlation(const DgpSpec& spec, std::size_t rows, unsigned threads) {
  const DgpSampler sampler(spec);
  const std::size_t p = spec.p;
  if (p > 4096) throw ConfigError("simulated correlation supports at most 4096 features");
  if (rows < 2) throw ConfigError("simulated correlation needs at least 2 rows");
  const rng::Key key = rng::Key::from(rng::derive_seed(spec.seed, kOracleStream));

  // Integer co-activation counts per treatment arm make the result exact and
  // independent of how rows are split across threads.
  const unsigned workers = std::min<unsigned>(resolve_workers(threads), 64);
  std::vector<std::vector<std::uint64_t>> pair_counts(workers, std::vector<std::uint64_t>(2 * p * p, 0));
  std::vector<std::vector<std::uint64_t>> arm_rows(workers, std::vector<std::uint64_t>(2, 0));
  const std::size_t chunk = (rows + workers - 1) / workers;
  parallel_for(workers, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> active;
    for (std::size_t t = begin; t < end; ++t) {
      auto& counts = pair_counts[t];
      for (std::size_t i = t * chunk; i < std::min(rows, (t + 1) * chunk); ++i) {
        double w = 0.0;
        sampler.draw_row(key, i, w, active);
        const std::size_t arm = w == 1.0 ? 1 : 0;
        ++arm_rows[t][arm];
        std::uint64_t* base = counts.data() + arm * p * p;
        for (std::size_t a = 0; a < active.size(); ++a) {
          std::uint64_t* row = base + static_cast<std::size_t>(active[a]) * p;
          for (std::size_t b = 0; b <= a; ++b) ++row[active[b]];
        }
      }
    }
  });
  std::vector<std::uint64_t> counts(2 * p * p, 0);
  std::uint64_t arm_total[2] = {0, 0};
  for (unsigned t = 0; t < workers; ++t) {
    for (std::size_t e = 0; e < counts.size(); ++e) counts[e] += pair_counts[t][e];
    arm_total[0] += arm_rows[t][0];
    arm_total[1] += arm_rows[t][1];
  }

  double coef[2] = {1.0, 1.0};
  if (spec.kind == TransformKind::ht_diff_in_means) {
    const double denom = spec.pi * (1.0 - spec.pi);
    coef[1] = (1.0 - spec.pi) / denom;
    coef[0] = (0.0 - spec.pi) / denom;
  }
  const double total = static_cast<double>(rows);
  std::vector<double> mean(p, 0.0);
  std::vector<double> second(p * p, 0.0);
  for (std::size_t arm = 0; arm < 2; ++arm) {
    const std::uint64_t* base = counts.data() + arm * p * p;
    for (std::size_t a = 0; a < p; ++a) {
      mean[a] += coef[arm] * static_cast<double>(base[a * p + a]) / total;
      for (std::size_t b = 0; b <= a; ++b) {
        second[a * p + b] += coef[arm] * coef[arm] * static_cast<double>(base[a * p + b]) / total;
      }
    }
  }
  std::vector<double> corr(p * p, 0.0);
  std::vector<double> sd(p);
  for (std::size_t a = 0; a < p; ++a) {
    const double var = second[a * p + a] - mean[a] * mean[a];
    if (!(var > 0.0)) throw ValidationError("a simulated feature never varies; increase the row count");
    sd[a] = std::sqrt(var);
  }
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const double value = a == b ? 1.0 : (second[a * p + b] - mean[a] * mean[b]) / (sd[a] * sd[b]);
      corr[a * p + b] = value;
      corr[b * p + a] = value;
    }
  }
  return corr;
}

std::vector<double> gaussian_kmax_sample(std::span<const double> corr, std::size_t p, std::size_t k, Side side,
                                         std::size_t draws, std::uint64_t seed, unsigned threads) {
  if (corr.size() != p * p) throw ValidationError("correlation matrix has the wrong size");
  if (k < 1 || k > p) throw InferenceError("k out of range for the Gaussian k-max");
  Eigen::MatrixXd sigma(p, p);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) sigma(a, b) = corr[a * p + b];
  }
  // Symmetric square root tolerates the tiny negative eigenvalues a
  // simulated correlation can carry.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root = solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();

  const rng::Key key = rng::Key::from(seed);
  std::vector<double> out(draws);
  const std::vector<std::size_t> all = [&] {
    std::vector<std::size_t> v(p);
    for (std::size_t j = 0; j < p; ++j) v[j] = j;
    return v;
  }();
  parallel_for(draws, threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd g(p);
    Eigen::VectorXd z(p);
    std::vector<double> scratch;
    for (std::size_t d = begin; d < end; ++d) {
      const auto d64 = static_cast<std::uint64_t>(d);
      for (std::size_t t = 0; t < p; t += 2) {
        const rng::NormalPair pair = rng::normal_pair(
            {static_cast<std::uint32_t>(d64), static_cast<std::uint32_t>(d64 >> 32), static_cast<std::uint32_t>(t >> 1),
             rng::tag::kSimOracle},
            key);
        g(static_cast<Eigen::Index>(t)) = pair.first;
        if (t + 1 < p) g(static_cast<Eigen::Index>(t + 1)) = pair.second;
      }
      z.noalias() = root * g;
      out[d] = kth_largest(z.data(), all, k, side == Side::two_sided, scratch);
    }
  });
  return out;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ValidationError("KS distance needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0;
  std::size_t ib = 0;
  double best = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
    best = std::max(best, std::fabs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  return best;
}

double ks_distance_studentized_kmax(const DgpSpec& spec, std::size_t k, std::size_t reps, std::size_t oracle_draws,
                                    const KsOptions& options) {
  spec.validate();
  if (k < 1 || k > spec.p) throw InferenceError("k out of range");
  if (reps < 1) throw ConfigError("KS distance needs at least one rep");
  const std::vector<double> theta = spec.true_theta();
  std::vector<double> stats(reps);
  std::vector<std::size_t> degenerate(reps, 0);
  const unsigned workers = resolve_workers(options.threads);
  parallel_for(reps, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> t(spec.p);
    std::vector<std::size_t> all(spec.p);
    for (std::size_t j = 0; j < spec.p; ++j) all[j] = j;
    std::vector<double> scratch;
    for (std::size_t rep = begin; rep < end; ++rep) {
      const SimDataset data = simulate_dataset(spec, rep);
      const TransformedMatrix x = transform_all(spec, data);
      const FeatureEstimates est = estimate_features(x, true, 1);
      const double root_n = std::sqrt(static_cast<double>(spec.n));
      for (std::size_t j = 0; j < spec.p; ++j) {
        if (est.sigma_hat_diag[j] > 0.0) {
          t[j] = root_n * (est.theta_hat[j] - theta[j]) / std::sqrt(est.sigma_hat_diag[j]);
        } else {
          t[j] = 0.0;
          ++degenerate[rep];
        }
      }
      stats[rep] = kth_largest(t.data(), all, k, options.side == Side::two_sided, scratch);
    }
  });
  std::size_t flat = 0;
  for (std::size_t d : degenerate) flat += d;
  if (flat > 0) spdlog::warn("{} feature columns had zero sample variance; their statistic was set to 0", flat);

  const std::vector<double> corr = simulated_correlation(spec, options.correlation_rows, options.threads);
  std::vector<double> oracle = gaussian_kmax_sample(corr, spec.p, k, options.side, oracle_draws,
                                                    rng::derive_seed(spec.seed, kOracleStream + 1), options.threads);
  return ks_two_sample(std::move(stats), std::move(oracle));
}

double ks_distance_bootstrap_kmax(const DgpSpec& spec, std::size_t k, const BootstrapConfig& bootstrap,
                                  std::size_t oracle_draws, const KsOptions& options) {
  spec.validate();
  const SimDataset data = simulate_dataset(spec, 0);
  auto x = std::make_shared<const TransformedMatrix>(transform_all(spec, data));
  BootstrapConfig cfg = bootstrap;
  cfg.studentize = true;
  cfg.side = options.side;
  const FeatureEstimates est = estimate_features(*x, true, cfg.threads);
  if (est.testable_columns().size() != spec.p) throw ValidationError("a simulated feature has zero variance");
  const BootstrapRun run = run_bootstrap(x, est, cfg);
  std::vector<double> stats = kmax_statistics(run, std::nullopt, k);
  const std::vector<double> corr = simulated_correlation(spec, options.correlation_rows, options.threads);
  std::vector<double> oracle = gaussian_kmax_sample(corr, spec.p, k, options.side, oracle_draws,
                                                    rng::derive_seed(spec.seed, kOracleStream + 2), options.threads);
  return ks_two_sample(std::move(stats), std::move(oracle));
}

// ---- interval coverage ----------------------------------------------------

namespace {

enum class Target { accuracy, precision, recall };

CoverageResult coverage_study(Target target, double q_true, double q_pred, double q_both, double q_agree,
                              std::size_t m, std::size_t reps, double alpha_ci, IntervalMethod method,
                              std::uint64_t seed) {
  if (m < 1 || reps < 1) throw ConfigError("coverage study needs m >= 1 and reps >= 1");
  double truth = q_agree;
  if (target != Target::accuracy) {
    if (!(q_both >= 0.0 && q_both <= std::min(q_true, q_pred) && q_true + q_pred - q_both <= 1.0 && q_true > 0.0 &&
          q_pred > 0.0)) {
      throw ConfigError("inconsistent joint label probabilities");
    }
    truth = target == Target::precision ? q_both / q_pred : q_both / q_true;
  }
  std::vector<char> covered(reps, 0);
  std::vector<char> defined(reps, 0);
  // Warnings for boundary estimates are expected here and would flood the log.
  const auto level = spdlog::get_level();
  spdlog::set_level(spdlog::level::err);
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const rng::Key key = rng::Key::from(rng::derive_seed(seed, rep));
    EvalTable table;
    table.rows.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
      const rng::Counter block = rng::philox4x32({static_cast<std::uint32_t>(r), 0, 0, rng::tag::kSimScores}, key);
      EvalRow& row = table.rows[r];
      row.doc_id = std::to_string(r);
      if (target == Target::accuracy) {
        row.y_true = unit32(block[1]) < 0.5 ? 1 : 0;
        row.y_pred = unit32(block[0]) < q_agree ? row.y_true : 1 - row.y_true;
      } else {
        const double u = unit32(block[0]);
        if (u < q_both) {
          row.y_true = 1, row.y_pred = 1;
        } else if (u < q_true) {
          row.y_true = 1, row.y_pred = 0;
        } else if (u < q_true + q_pred - q_both) {
          row.y_true = 0, row.y_pred = 1;
        } else {
          row.y_true = 0, row.y_pred = 0;
        }
      }
    }
    const ScoreEstimate est = target == Target::accuracy    ? a_score(table, alpha_ci, method)
                              : target == Target::precision ? p_score(table, alpha_ci, method)
                                                            : r_score(table, alpha_ci, method);
    if (est.undefined) continue;
    defined[rep] = 1;
    covered[rep] = est.ci_lower <= truth && truth <= est.ci_upper;
  }
  spdlog::set_level(level);
  CoverageResult result;
  result.reps = reps;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    result.defined += defined[rep];
    result.coverage += covered[rep];
  }
  result.coverage = result.defined ? result.coverage / static_cast<double>(result.defined) : 0.0;
  result.mc_standard_error = binomial_standard_error(result.coverage, result.defined);
  return result;
}

}  // namespace

CoverageResult accuracy_coverage(double q, std::size_t m, std::size_t reps, double alpha_ci, IntervalMethod method,
                                 std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("agreement probability must lie in [0, 1]");
  return coverage_study(Target::accuracy, 0, 0, 0, q, m, reps, alpha_ci, method, seed);
}

CoverageResult precision_coverage(double q_true, double q_pred, double q_both, std::size_t m, std::size_t reps,
                                  double alpha_ci, IntervalMethod method, std::uint64_t seed) {
  return coverage_study(Target::precision, q_true, q_pred, q_both, 0, m, reps, alpha_ci, method, seed);
}

CoverageResult recall_coverage(double q_true, double q_pred, double q_both, std::size_t m, std::size_t reps,
                               double alpha_ci, IntervalMethod method, std::uint64_t seed) {
  return coverage_study(Target::recall, q_true, q_pred, q_both, 0, m, reps, alpha_ci, method, seed);
}

// ---- grids ----------------------------------------------------------------

namespace {

template <typename T>
T required(const toml::table& table, std::string_view key, const std::string& where) {
  const auto value = table[key].value<T>();
  if (!value) throw ConfigError(where + ": missing or mistyped key '" + std::string(key) + "'");
  return *value;
}

std::vector<double> number_list(const toml::node& node, const std::string& where, std::string_view key) {
  std::vector<double> out;
  if (const auto* array = node.as_array()) {
    for (const auto& item : *array) {
      const auto value = item.value<double>();
      if (!value) throw ConfigError(where + ": '" + std::string(key) + "' must hold numbers");
      out.push_back(*value);
    }
  } else if (const auto value = node.value<double>()) {
    out.push_back(*value);
  } else {
    throw ConfigError(where + ": '" + std::string(key) + "' must be a number or an array of numbers");
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> pair_list(const toml::node& node, const std::string& where,
                                                      std::string_view key) {
  std::vector<std::pair<std::size_t, double>> out;
  const auto* array = node.as_array();
  if (!array) throw ConfigError(where + ": '" + std::string(key) + "' must be an array of [feature, value] pairs");
  for (const auto& item : *array) {
    const auto* pair = item.as_array();
    if (!pair || pair->size() != 2) throw ConfigError(where + ": malformed entry in '" + std::string(key) + "'");
    const auto feature = (*pair)[0].value<std::int64_t>();
    const auto value = (*pair)[1].value<double>();
    if (!feature || *feature < 0 || !value) {
      throw ConfigError(where + ": malformed entry in '" + std::string(key) + "'");
    }
    out.emplace_back(static_cast<std::size_t>(*feature), *value);
  }
  return out;
}

GridEntry parse_entry(const toml::table& table, const std::string& where) {
  static const std::vector<std::string_view> known = {
      "id",      "n",           "p",      "sparsity",           "sparsity_overrides",     "correlation",
      "rho",     "block_size",  "kind",   "pi",                 "seed",                   "effects",
      "reps",    "bootstrap_draws", "bootstrap_seed", "alpha", "alphas", "k", "ks", "method", "side", "studentize",
      "max_subset_enumeration"};
  for (const auto& [key, value] : table) {
    if (std::find(known.begin(), known.end(), key.str()) == known.end()) {
      throw ConfigError(where + ": unknown key '" + std::string(key.str()) + "'");
    }
  }
  GridEntry entry;
  DgpSpec& spec = entry.spec;
  spec.id = required<std::string>(table, "id", where);
  const std::string at = where + " ('" + spec.id + "')";
  const auto n = required<std::int64_t>(table, "n", at);
  const auto p = required<std::int64_t>(table, "p", at);
  if (n < 2 || p < 1) throw ConfigError(at + ": n and p must be positive");
  spec.n = static_cast<std::size_t>(n);
  spec.p = static_cast<std::size_t>(p);
  spec.sparsity = table.contains("sparsity") ? number_list(*table.get("sparsity"), at, "sparsity")
                                             : std::vector<double>{0.1};
  if (table.contains("sparsity_overrides")) {
    if (spec.sparsity.size() == 1) spec.sparsity.assign(spec.p, spec.sparsity.front());
    for (const auto& [feature, s] : pair_list(*table.get("sparsity_overrides"), at, "sparsity_overrides")) {
      if (feature >= spec.p) throw ConfigError(at + ": sparsity override feature out of range");
      spec.sparsity[feature] = s;
    }
  }
  const std::string correlation = table["correlation"].value_or(std::string("independent"));
  if (correlation == "independent") {
    spec.correlation.kind = CorrelationKind::independent;
  } else if (correlation == "equicorrelated") {
    spec.correlation.kind = CorrelationKind::equicorrelated;
    spec.correlation.rho = required<double>(table, "rho", at);
  } else if (correlation == "block") {
    spec.correlation.kind = CorrelationKind::block;
    spec.correlation.rho = required<double>(table, "rho", at);
    const auto size = required<std::int64_t>(table, "block_size", at);
    if (size < 1) throw ConfigError(at + ": block_size must be positive");
    spec.correlation.block_size = static_cast<std::size_t>(size);
  } else {
    throw ConfigError(at + ": unknown correlation '" + correlation + "'");
  }
  spec.kind = parse_transform_kind(table["kind"].value_or(std::string("ht_diff_in_means")));
  spec.pi = table["pi"].value_or(0.5);
  spec.seed = static_cast<std::uint64_t>(table["seed"].value_or(std::int64_t{0}));
  if (table.contains("effects")) {
    for (const auto& [feature, size] : pair_list(*table.get("effects"), at, "effects")) {
      spec.effects.push_back({feature, size});
    }
  }
  spec.validate();

  const auto reps = table["reps"].value_or(std::int64_t{200});
  if (reps < 1) throw ConfigError(at + ": reps must be positive");
  entry.reps = static_cast<std::size_t>(reps);
  entry.bootstrap.n_draws = static_cast<std::size_t>(table["bootstrap_draws"].value_or(std::int64_t{500}));
  entry.bootstrap.seed = static_cast<std::uint64_t>(table["bootstrap_seed"].value_or(static_cast<std::int64_t>(spec.seed)));
  entry.bootstrap.studentize = table["studentize"].value_or(true);
  entry.bootstrap.validate();

  std::vector<double> alphas{0.05};
  if (table.contains("alphas")) alphas = number_list(*table.get("alphas"), at, "alphas");
  if (table.contains("alpha")) alphas = number_list(*table.get("alpha"), at, "alpha");
  std::vector<double> ks{1.0};
  if (table.contains("ks")) ks = number_list(*table.get("ks"), at, "ks");
  if (table.contains("k")) ks = number_list(*table.get("k"), at, "k");
  const Method method = parse_method(table["method"].value_or(std::string("one_step")));
  const Side side = parse_side(table["side"].value_or(std::string("two_sided")));
  const auto cap = table["max_subset_enumeration"].value_or(std::int64_t{50000});
  for (double alpha : alphas) {
    for (double k : ks) {
      if (!(k >= 1.0) || k != std::floor(k)) throw ConfigError(at + ": k must be a positive integer");
      InferenceConfig config;
      config.alpha = alpha;
      config.k = static_cast<std::size_t>(k);
      config.method = method;
      config.side = side;
      config.max_subset_enumeration = static_cast<std::size_t>(std::max<std::int64_t>(cap, 1));
      config.validate();
      entry.configs.push_back(config);
    }
  }
  return entry;
}

}  // namespace

std::vector<GridEntry> parse_grid(std::string_view text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ParseError(source, e.source().begin.line, std::string(e.description()));
  }
  for (const auto& [key, value] : root) {
    if (key.str() != "spec") throw ConfigError(source + ": unknown top-level key '" + std::string(key.str()) + "'");
  }
  const auto* specs = root["spec"].as_array();
  if (!specs || specs->empty()) throw ConfigError(source + ": grid has no [[spec]] entries");
  std::vector<GridEntry> grid;
  for (std::size_t s = 0; s < specs->size(); ++s) {
    const auto* table = (*specs)[s].as_table();
    if (!table) throw ConfigError(source + ": [[spec]] entry " + std::to_string(s + 1) + " is not a table");
    grid.push_back(parse_entry(*table, source + " spec " + std::to_string(s + 1)));
  }
  return grid;
}

std::vector<GridEntry> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open grid file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_grid(buffer.str(), path.string());
}

std::vector<std::pair<const GridEntry*, McResult>> run_grid(const std::vector<GridEntry>& grid, unsigned threads,
                                                            const GridProgress& progress) {
  if (grid.empty()) throw ConfigError("grid is empty");
  std::vector<std::pair<const GridEntry*, McResult>> results;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const GridEntry& entry = grid[s];
    if (progress) progress(entry, s, grid.size());
    for (McResult& r : estimate_k_fwer(entry.spec, entry.configs, entry.bootstrap, entry.reps, threads)) {
      results.emplace_back(&entry, std::move(r));
    }
  }
  return results;
}

void write_grid_results(const std::vector<std::pair<const GridEntry*, McResult>>& results, std::ostream& out) {
  out << "spec_id\talpha\tk\tmethod\treps\tempirical_k_fwer\tse\tmean_selected\tpower\n";
  for (const auto& [entry, r] : results) {
    double mean_selected = 0.0;
    for (std::size_t s : r.selected_counts) mean_selected += static_cast<double>(s);
    mean_selected /= static_cast<double>(std::max<std::size_t>(1, r.reps));
    std::string power;
    for (std::size_t e = 0; e < r.per_effect_power.size(); ++e) {
      if (e) power += ';';
      power += std::to_string(entry->spec.effects[e].feature) + "=" + tsv::format_double(r.per_effect_power[e]);
    }
    if (power.empty()) power = "NA";
    out << tsv::sanitize_cell(entry->spec.id) << '\t' << tsv::format_double(r.config.alpha) << '\t' << r.config.k
        << '\t' << to_string(r.config.method) << '\t' << r.reps << '\t' << tsv::format_double(r.empirical_k_fwer)
        << '\t' << tsv::format_double(r.mc_standard_error) << '\t' << tsv::format_double(mean_selected) << '\t'
        << power << '\n';
  }
}

}  // namespace discovery
