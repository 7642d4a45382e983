#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "em2c/particle_cloud.hpp"
#include "em2c/rng.hpp"

namespace em2c {

struct MetricConfig {
  std::size_t n_projections = 100;
  std::size_t n_samples = 2000;
  std::uint64_t seed = 0;
  bool u_statistic = false;  // energy distance without within-sample diagonals

  void validate() const;
};

/// sqrt(mean_i (a_i - b_i)^2) over sorted inputs of equal length.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// Unit directions from normalized Gaussian draws (zero-norm draws redrawn).
Matrix random_directions(std::size_t k, std::size_t d, Rng& rng);

/// Sliced W2 with k directions drawn from rng.
double sliced_wasserstein(const Matrix& a, const Matrix& b, std::size_t k, Rng& rng);

/// Directions from the stream (cfg.seed, kMetric).
double sliced_wasserstein(const Matrix& a, const Matrix& b, const MetricConfig& cfg);

/// Mean Euclidean distance over all pairs (a_i, b_j); with exclude_diagonal
/// the i == j pairs are skipped (used for a == b).
double mean_pairwise_distance(const Matrix& a, const Matrix& b, bool exclude_diagonal = false);

/// 2 E|X - Y| - E|X - X'| - E|Y - Y'|. V-statistic by default.
double energy_distance(const Matrix& a, const Matrix& b, bool u_statistic = false);

/// n multinomial draws from a weighted cloud.
Matrix weighted_resample(const ParticleCloud& cloud, std::size_t n, Rng& rng);

}  // namespace em2c
