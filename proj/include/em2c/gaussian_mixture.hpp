#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <span>
#include <vector>

#include "em2c/rng.hpp"

namespace em2c {

/// Full-covariance Gaussian mixture in a low dimension (typically a 2D block).
/// Densities are normalized; all evaluation happens in log space.
class GaussianMixture {
 public:
  GaussianMixture() = default;

  /// Weights are renormalized after checking they sum to one within 1e-9.
  /// A covariance whose Cholesky factorization fails is regularized once by
  /// adding 1e-3 I; a second failure throws ModelError.
  GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                  std::vector<Eigen::MatrixXd> covariances);

  static GaussianMixture single(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }

  const std::vector<double>& weights() const { return weights_; }
  const Eigen::VectorXd& mean(std::size_t k) const { return means_[k]; }
  const Eigen::MatrixXd& covariance(std::size_t k) const { return covs_[k]; }

  double log_density(std::span<const double> x) const;

  /// out[k] = log w_k + log N(x | m_k, S_k).
  void log_joint(std::span<const double> x, std::span<double> out) const;

  /// Mahalanobis term (x - m_k)^T S_k^{-1} (x - m_k).
  double mahalanobis(std::size_t k, std::span<const double> x) const;

  /// log N(x | m_k, S_k) without the mixture weight.
  double log_component(std::size_t k, std::span<const double> x) const;

  void grad_log_density(std::span<const double> x, std::span<double> out) const;

  std::size_t sample_component(Rng& rng) const;
  void sample(Rng& rng, std::span<double> out) const;

  /// trace(S_k^{-1}); enters the regularized EM objective.
  double trace_precision(std::size_t k) const { return trace_prec_[k]; }

 private:
  void build_cache();

  std::size_t dim_ = 0;
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covs_;
  std::vector<Eigen::MatrixXd> chol_;
  // Row-major lower-triangular inverse Cholesky factors, dim*dim per component.
  std::vector<double> inv_chol_;
  std::vector<double> log_norm_;  // -0.5 d log(2 pi) - 0.5 log det S_k
  std::vector<double> log_w_;
  std::vector<double> cum_w_;
  std::vector<double> trace_prec_;
};

}  // namespace em2c
