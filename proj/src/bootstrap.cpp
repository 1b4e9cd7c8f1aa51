#include "discovery/bootstrap.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "discovery/error.hpp"
#include "discovery/hashing.hpp"
#include "discovery/parallel.hpp"
#include "discovery/philox.hpp"
#include "discovery/tsv.hpp"

namespace discovery {

namespace {

constexpr std::size_t kBlockDraws = 64;

rng::Counter multiplier_counter(std::size_t draw, std::size_t row) {
  const auto b = static_cast<std::uint64_t>(draw);
  return {static_cast<std::uint32_t>(row >> 1), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
          rng::tag::kBootstrap};
}

}  // namespace

std::string to_string(Side side) { return side == Side::one_sided ? "one_sided" : "two_sided"; }

Side parse_side(std::string_view text) {
  if (text == "one_sided") return Side::one_sided;
  if (text == "two_sided") return Side::two_sided;
  throw ConfigError("unknown side '" + std::string(text) + "'");
}

std::string to_string(Retention retention) {
  return retention == Retention::in_memory ? "in_memory" : "recompute";
}

Retention parse_retention(std::string_view text) {
  if (text == "in_memory") return Retention::in_memory;
  if (text == "recompute") return Retention::recompute;
  throw ConfigError("unknown retention '" + std::string(text) + "'");
}

void BootstrapConfig::validate() const {
  if (n_draws < 100) throw ConfigError("bootstrap needs at least 100 draws");
  if (memory_budget_bytes == 0) throw ConfigError("bootstrap memory budget must be positive");
}

double bootstrap_multiplier(std::uint64_t seed, std::size_t draw, std::size_t row) {
  const rng::NormalPair pair = rng::normal_pair(multiplier_counter(draw, row), rng::Key::from(seed));
  return (row & 1) ? pair.second : pair.first;
}

double k_max(std::span<const double> x, std::size_t k) {
  if (k < 1 || k > x.size()) {
    throw InferenceError("k=" + std::to_string(k) + " out of range for a vector of length " +
                         std::to_string(x.size()));
  }
  std::vector<double> copy(x.begin(), x.end());
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(k - 1), copy.end(), std::greater<>());
  return copy[k - 1];
}

double kth_largest(const double* values, std::span<const std::size_t> indices, std::size_t k, bool absolute,
                   std::vector<double>& scratch) {
  if (k <= 16) {
    // Descending buffer of the k largest seen so far.
    double top[16];
    std::size_t filled = 0;
    for (std::size_t idx : indices) {
      const double v = absolute ? std::fabs(values[idx]) : values[idx];
      if (filled == k && !(v > top[k - 1])) continue;
      std::size_t pos = filled < k ? filled++ : k - 1;
      while (pos > 0 && top[pos - 1] < v) {
        top[pos] = top[pos - 1];
        --pos;
      }
      top[pos] = v;
    }
    return top[k - 1];
  }
  scratch.resize(indices.size());
  for (std::size_t e = 0; e < indices.size(); ++e) {
    scratch[e] = absolute ? std::fabs(values[indices[e]]) : values[indices[e]];
  }
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end(),
                   std::greater<>());
  return scratch[k - 1];
}

// ---- BootstrapRun ---------------------------------------------------------

struct BootstrapRun::Engine {
  std::shared_ptr<const TransformedMatrix> x;
  std::vector<double> mean;
  std::vector<double> factor;
};

std::optional<std::size_t> BootstrapRun::local_index(std::size_t column) const {
  const auto it = std::lower_bound(columns_.begin(), columns_.end(), column);
  if (it == columns_.end() || *it != column) return std::nullopt;
  return static_cast<std::size_t>(it - columns_.begin());
}

BootstrapRun BootstrapRun::from_draws(BootstrapConfig config, std::string estim_fingerprint,
                                      std::vector<std::size_t> columns, std::vector<double> draws) {
  if (columns.empty()) throw InferenceError("bootstrap run over an empty feature set");
  if (draws.size() != config.n_draws * columns.size()) throw InferenceError("draw matrix has the wrong size");
  for (std::size_t r = 1; r < columns.size(); ++r) {
    if (columns[r] <= columns[r - 1]) throw InferenceError("bootstrap columns must be strictly increasing");
  }
  for (double v : draws) {
    if (!std::isfinite(v)) throw InferenceError("bootstrap draws must be finite");
  }
  BootstrapRun run;
  run.config_ = config;
  run.estim_fingerprint_ = std::move(estim_fingerprint);
  run.columns_ = std::move(columns);
  run.draws_ = std::move(draws);
  return run;
}

void BootstrapRun::compute_block(std::size_t first, std::size_t count, double* out) const {
  const TransformedMatrix& x = *engine_->x;
  const std::size_t n = x.n();
  const std::size_t q = columns_.size();
  const rng::Key key = rng::Key::from(config_.seed);
  const unsigned threads = config_.threads;

  // xi laid out row-major: xi[i * count + b].
  std::vector<double> xi(n * count);
  const std::size_t pairs = (n + 1) / 2;
  parallel_for(pairs, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m) {
      const std::size_t row = 2 * m;
      for (std::size_t b = 0; b < count; ++b) {
        const rng::NormalPair pair = rng::normal_pair(multiplier_counter(first + b, row), key);
        xi[row * count + b] = pair.first;
        if (row + 1 < n) xi[(row + 1) * count + b] = pair.second;
      }
    }
  });
  std::vector<double> xi_sum(count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &xi[i * count];
    for (std::size_t b = 0; b < count; ++b) xi_sum[b] += row[b];
  }

  const auto& col_ptr = x.col_ptr();
  const auto& row_idx = x.row_idx();
  const auto& values = x.values();
  parallel_for(q, threads, [&](std::size_t begin, std::size_t end) {
    double acc[kBlockDraws];
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t j = columns_[r];
      std::fill(acc, acc + count, 0.0);
      for (std::size_t e = col_ptr[j]; e < col_ptr[j + 1]; ++e) {
        const double v = values[e];
        const double* row = &xi[static_cast<std::size_t>(row_idx[e]) * count];
        for (std::size_t b = 0; b < count; ++b) acc[b] += v * row[b];
      }
      const double mean = engine_->mean[r];
      const double factor = engine_->factor[r];
      for (std::size_t b = 0; b < count; ++b) out[b * q + r] = (acc[b] - mean * xi_sum[b]) * factor;
    }
  });
}

void BootstrapRun::for_each_block(const BlockFn& fn) const {
  const std::size_t q = columns_.size();
  const std::size_t B = config_.n_draws;
  if (!draws_.empty()) {
    for (std::size_t first = 0; first < B; first += kBlockDraws) {
      const std::size_t count = std::min(kBlockDraws, B - first);
      fn(first, count, draws_.data() + first * q);
    }
    return;
  }
  std::vector<double> block(kBlockDraws * q);
  for (std::size_t first = 0; first < B; first += kBlockDraws) {
    const std::size_t count = std::min(kBlockDraws, B - first);
    compute_block(first, count, block.data());
    fn(first, count, block.data());
  }
}

std::vector<double> BootstrapRun::draw(std::size_t b) const {
  if (b >= config_.n_draws) throw InferenceError("draw index out of range");
  const std::size_t q = columns_.size();
  if (!draws_.empty()) return std::vector<double>(draws_.begin() + b * q, draws_.begin() + (b + 1) * q);
  std::vector<double> out(q);
  compute_block(b, 1, out.data());
  return out;
}

std::string BootstrapRun::run_key() const {
  Sha256 hasher;
  hasher.update("BOOT key v1");
  hasher.update(estim_fingerprint_);
  hasher.update_u64(config_.n_draws);
  hasher.update_u64(config_.seed);
  hasher.update_u64(config_.studentize ? 1 : 0);
  for (std::size_t c : columns_) hasher.update_u64(c);
  return hasher.hex_digest();
}

namespace {

std::string cache_header(const BootstrapConfig& config, std::size_t width, const std::string& key) {
  return "BOOT v1 B=" + std::to_string(config.n_draws) + " p=" + std::to_string(width) +
         " seed=" + std::to_string(config.seed) + " hash=" + key;
}

}  // namespace

void BootstrapRun::save_cache(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write bootstrap cache '" + path.string() + "'");
  out << cache_header(config_, width(), run_key()) << '\n';
  std::vector<char> bytes;
  for_each_block([&](std::size_t, std::size_t count, const double* block) {
    bytes.resize(count * width() * 8);
    for (std::size_t e = 0; e < count * width(); ++e) {
      const auto bits = std::bit_cast<std::uint64_t>(block[e]);
      for (int k = 0; k < 8; ++k) bytes[e * 8 + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  });
  if (!out) throw IngestionError("failed writing bootstrap cache '" + path.string() + "'");
}

std::optional<BootstrapRun> BootstrapRun::load_cache(const std::filesystem::path& path, const BootstrapConfig& config,
                                                     const std::string& estim_fingerprint,
                                                     const std::vector<std::size_t>& columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  BootstrapRun probe;
  probe.config_ = config;
  probe.estim_fingerprint_ = estim_fingerprint;
  probe.columns_ = columns;
  std::string header;
  std::getline(in, header);
  if (header != cache_header(config, columns.size(), probe.run_key())) {
    spdlog::warn("bootstrap cache '{}' does not match this run; recomputing", path.string());
    return std::nullopt;
  }
  const std::size_t total = config.n_draws * columns.size();
  std::vector<char> bytes(total * 8);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    spdlog::warn("bootstrap cache '{}' is truncated; recomputing", path.string());
    return std::nullopt;
  }
  std::vector<double> draws(total);
  for (std::size_t e = 0; e < total; ++e) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[e * 8 + k])) << (8 * k);
    }
    draws[e] = std::bit_cast<double>(bits);
  }
  return from_draws(config, estim_fingerprint, columns, std::move(draws));
}

BootstrapRun run_bootstrap(std::shared_ptr<const TransformedMatrix> x, const FeatureEstimates& est,
                           const BootstrapConfig& config) {
  config.validate();
  if (!x) throw InferenceError("bootstrap needs a transformed matrix");
  if (est.fingerprint != x->fingerprint()) throw InferenceError("estimates were not computed from this matrix");
  if (est.studentized != config.studentize) {
    throw InferenceError("studentization differs between the estimates and the bootstrap configuration");
  }
  std::vector<std::size_t> columns = est.testable_columns();
  if (columns.empty()) throw InferenceError("no testable features to bootstrap");

  auto engine = std::make_shared<BootstrapRun::Engine>();
  engine->x = x;
  const double root_n = std::sqrt(static_cast<double>(x->n()));
  for (std::size_t j : columns) {
    engine->mean.push_back(est.theta_hat[j]);
    const double scale = config.studentize ? 1.0 / std::sqrt(est.sigma_hat_diag[j]) : 1.0;
    engine->factor.push_back(scale / root_n);
  }

  BootstrapRun run;
  run.config_ = config;
  run.estim_fingerprint_ = x->fingerprint();
  run.columns_ = std::move(columns);
  run.engine_ = std::move(engine);

  const std::size_t q = run.columns_.size();
  const bool fits = config.n_draws <= config.memory_budget_bytes / 8 / q;
  if (config.retention == Retention::in_memory) {
    if (fits) {
      run.draws_.resize(config.n_draws * q);
      for (std::size_t first = 0; first < config.n_draws; first += kBlockDraws) {
        const std::size_t count = std::min(kBlockDraws, config.n_draws - first);
        run.compute_block(first, count, run.draws_.data() + first * q);
      }
    } else {
      spdlog::warn("bootstrap draws need {} bytes, above the {} byte budget; recomputing draws from seeds",
                   static_cast<double>(config.n_draws) * static_cast<double>(q) * 8.0, config.memory_budget_bytes);
    }
  }
  return run;
}

BootstrapRun run_bootstrap(const TransformedMatrix& x, const FeatureEstimates& est, const BootstrapConfig& config) {
  return run_bootstrap(std::make_shared<const TransformedMatrix>(x), est, config);
}

// ---- critical values ------------------------------------------------------

std::size_t quantile_rank(std::size_t n_draws, double alpha) {
  if (n_draws == 0) throw InferenceError("no bootstrap draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie strictly between 0 and 1");
  const double target = static_cast<double>(n_draws) * (1.0 - alpha);
  // Products such as 1000 * 0.95 land a hair above an integer; snap them.
  const double nearest = std::round(target);
  const double rank = std::fabs(target - nearest) < 1e-9 ? nearest : std::ceil(target);
  return std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, n_draws);
}

double upper_quantile(std::vector<double> stats, double alpha) {
  const std::size_t rank = quantile_rank(stats.size(), alpha);
  std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(rank - 1), stats.end());
  return stats[rank - 1];
}

std::vector<double> kmax_statistics(const BootstrapRun& run, std::optional<std::span<const std::size_t>> subset,
                                    std::size_t k) {
  std::vector<std::size_t> local;
  if (subset) {
    local.reserve(subset->size());
    for (std::size_t column : *subset) {
      const auto index = run.local_index(column);
      if (!index) throw InferenceError("column " + std::to_string(column) + " is not covered by the bootstrap run");
      local.push_back(*index);
    }
  } else {
    local.resize(run.width());
    for (std::size_t r = 0; r < local.size(); ++r) local[r] = r;
  }
  if (local.empty()) throw InferenceError("critical value over an empty feature set");
  if (k < 1 || k > local.size()) {
    throw InferenceError("k=" + std::to_string(k) + " exceeds the " + std::to_string(local.size()) +
                         " features in the tested set");
  }
  const bool absolute = run.config().side == Side::two_sided;
  std::vector<double> stats(run.n_draws());
  std::vector<double> scratch;
  const std::size_t q = run.width();
  run.for_each_block([&](std::size_t first, std::size_t count, const double* block) {
    for (std::size_t b = 0; b < count; ++b) {
      stats[first + b] = kth_largest(block + b * q, local, k, absolute, scratch);
    }
  });
  return stats;
}

CriticalValue critical_value(const BootstrapRun& run, std::span<const std::size_t> subset, double alpha,
                             std::size_t k) {
  CriticalValue cv;
  cv.value = upper_quantile(kmax_statistics(run, subset, k), alpha);
  cv.alpha = alpha;
  cv.k = k;
  cv.full = false;
  cv.subset.assign(subset.begin(), subset.end());
  cv.subset_size = subset.size();
  return cv;
}

CriticalValue critical_value(const BootstrapRun& run, double alpha, std::size_t k) {
  CriticalValue cv;
  cv.value = upper_quantile(kmax_statistics(run, std::nullopt, k), alpha);
  cv.alpha = alpha;
  cv.k = k;
  cv.full = true;
  cv.subset_size = run.width();
  return cv;
}

}  // namespace discovery
