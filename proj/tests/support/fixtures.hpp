#pragma once

// Small random transformed matrices for inference tests.

#include <cstdint>
#include <random>
#include <vector>

#include "discovery/transforms.hpp"

namespace fixtures {

// n x p indicator matrix with per-column activation rates drawn in [0.1, 0.5]
// and `planted` leading columns shifted up by `shift`.
inline discovery::TransformedMatrix random_indicators(std::uint64_t seed, std::size_t n, std::size_t p,
                                                      std::size_t planted = 0, double shift = 0.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> rate(0.1, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> values(n * p);
  for (std::size_t j = 0; j < p; ++j) {
    const double r = rate(gen) + (j < planted ? shift : 0.0);
    for (std::size_t i = 0; i < n; ++i) values[j * n + i] = u(gen) < r ? 1.0 : 0.0;
  }
  std::vector<discovery::FeatureId> ids(p);
  for (std::size_t j = 0; j < p; ++j) ids[j] = static_cast<discovery::FeatureId>(j);
  return discovery::TransformedMatrix::from_dense(n, ids, values);
}

// Same shape with centered +-1 entries around a per-column mean in [-m, m].
inline discovery::TransformedMatrix random_signed(std::uint64_t seed, std::size_t n, std::size_t p, double m) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> mean(-m, m);
  std::normal_distribution<double> z;
  std::vector<double> values(n * p);
  for (std::size_t j = 0; j < p; ++j) {
    const double mu = mean(gen);
    for (std::size_t i = 0; i < n; ++i) values[j * n + i] = mu + z(gen);
  }
  std::vector<discovery::FeatureId> ids(p);
  for (std::size_t j = 0; j < p; ++j) ids[j] = static_cast<discovery::FeatureId>(j);
  return discovery::TransformedMatrix::from_dense(n, ids, values);
}

}  // namespace fixtures
