#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "em2c/gaussian_mixture.hpp"
#include "em2c/particle_cloud.hpp"
#include "em2c/rng.hpp"

namespace em2c {

/// Product of independent Gaussian mixtures over consecutive coordinate
/// blocks of width block_dim (2 for the benchmarks, 1 for scalar problems).
class TensorizedGmm {
 public:
  TensorizedGmm() = default;
  TensorizedGmm(std::size_t block_dim, std::vector<GaussianMixture> blocks);

  /// Same Gaussian N(mean_j, variance) on every block, one component each.
  static TensorizedGmm isotropic_gaussian(const Eigen::VectorXd& mean, double variance,
                                          std::size_t block_dim = 2);

  std::size_t dim() const { return block_dim_ * blocks_.size(); }
  std::size_t block_dim() const { return block_dim_; }
  std::size_t n_blocks() const { return blocks_.size(); }
  const GaussianMixture& block(std::size_t j) const { return blocks_[j]; }
  const std::vector<GaussianMixture>& blocks() const { return blocks_; }

  /// Normalized log-density: sum of block log-densities. Throws InputError on
  /// a dimension mismatch.
  double log_density(std::span<const double> x) const;

  /// Per block: categorical component draw then m + L z.
  Matrix sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t block_dim_ = 2;
  std::vector<GaussianMixture> blocks_;
};

struct EmFitConfig {
  std::size_t k0 = 1;
  std::size_t n_init = 3;
  std::size_t max_iters = 500;
  double cov_reg = 1e-3;
  double tol = 1e-6;

  void validate() const;
};

struct EmFitResult {
  GaussianMixture model;
  /// Regularized average log-likelihood of the selected restart.
  double objective = 0.0;
  /// Objective after every E-step of the selected restart.
  std::vector<double> objective_trace;
  /// Iterations (indices into objective_trace) right after a component reseed.
  std::vector<std::size_t> reseed_iterations;
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t failed_restarts = 0;
};

/// k-means++ D^2 seeding over the rows of samples.
Matrix kmeanspp_init(const Matrix& samples, std::size_t k, Rng& rng);

/// EM for a full-covariance mixture with k-means++ initialization and
/// cov_reg * I added to every covariance update. The monitored objective is
///   (1/N) sum_i log sum_k w_k N(z_i | m_k, S_k) exp(-cov_reg tr(S_k^{-1}) / 2),
/// for which the regularized M-step is exact, so it never decreases between
/// reseeds. Stops when the relative improvement drops below tol.
EmFitResult em_fit(const Matrix& samples, const EmFitConfig& cfg, Rng& rng);

struct TensorFitResult {
  TensorizedGmm model;
  std::vector<EmFitResult> blocks;
};

/// Fits each block independently on columns [j*b, (j+1)*b) of the cloud.
/// Block j uses the substream (seed, kProjection, iteration, j).
TensorFitResult fit_tensorized(const Matrix& points, std::size_t block_dim, const EmFitConfig& cfg,
                               std::uint64_t seed, std::uint64_t iteration);

/// Text format, 17 significant digits:
///   tgmm 1
///   dim <d> block_dim <b> blocks <B>
///   block <j> components <K>
///   <w> <mean...> <row-major covariance...>     (K lines per block)
void write_model(std::ostream& os, const TensorizedGmm& model);
TensorizedGmm read_model(std::istream& is);

}  // namespace em2c
