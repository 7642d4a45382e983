#include "em2c/gaussian_mixture.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "em2c/errors.hpp"

namespace em2c {

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                                 std::vector<Eigen::MatrixXd> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
  if (weights_.empty()) throw ModelError("gaussian mixture: no components");
  if (means_.size() != weights_.size() || covs_.size() != weights_.size()) {
    throw ModelError("gaussian mixture: weights, means and covariances differ in length");
  }
  dim_ = static_cast<std::size_t>(means_[0].size());
  if (dim_ == 0) throw ModelError("gaussian mixture: zero dimension");
  double total = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (!(weights_[k] >= 0.0)) throw ModelError("gaussian mixture: negative or NaN weight");
    if (static_cast<std::size_t>(means_[k].size()) != dim_ ||
        static_cast<std::size_t>(covs_[k].rows()) != dim_ ||
        static_cast<std::size_t>(covs_[k].cols()) != dim_) {
      throw ModelError("gaussian mixture: inconsistent component dimensions");
    }
    if (!means_[k].allFinite() || !covs_[k].allFinite()) {
      throw ModelError("gaussian mixture: non-finite parameters");
    }
    total += weights_[k];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ModelError("gaussian mixture: weights do not sum to 1");
  if (std::abs(total - 1.0) > 1e-12) {
    for (auto& w : weights_) w /= total;
  }
  build_cache();
}

GaussianMixture GaussianMixture::single(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  return GaussianMixture({1.0}, {mean}, {cov});
}

void GaussianMixture::build_cache() {
  const std::size_t K = weights_.size();
  const std::size_t d = dim_;
  chol_.assign(K, Eigen::MatrixXd());
  inv_chol_.assign(K * d * d, 0.0);
  log_norm_.assign(K, 0.0);
  log_w_.assign(K, 0.0);
  cum_w_.assign(K, 0.0);
  trace_prec_.assign(K, 0.0);

  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    Eigen::MatrixXd sym = 0.5 * (covs_[k] + covs_[k].transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success) {
      sym += 1e-3 * Eigen::MatrixXd::Identity(d, d);
      llt.compute(sym);
      if (llt.info() != Eigen::Success) {
        throw ModelError("gaussian mixture: covariance is not positive definite");
      }
    }
    covs_[k] = sym;
    chol_[k] = llt.matrixL();
    const Eigen::MatrixXd inv_l =
        chol_[k].triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
    double log_det_half = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      log_det_half += std::log(chol_[k](r, r));
      for (std::size_t c = 0; c <= r; ++c) inv_chol_[k * d * d + r * d + c] = inv_l(r, c);
    }
    trace_prec_[k] = inv_l.squaredNorm();
    log_norm_[k] = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - log_det_half;
    log_w_[k] = weights_[k] > 0.0 ? std::log(weights_[k]) : -std::numeric_limits<double>::infinity();
    acc += weights_[k];
    cum_w_[k] = acc;
  }
  cum_w_.back() = 1.0;
}

double GaussianMixture::mahalanobis(std::size_t k, std::span<const double> x) const {
  const std::size_t d = dim_;
  const double* L = inv_chol_.data() + k * d * d;
  const double* m = means_[k].data();
  if (d == 2) {
    const double u0 = x[0] - m[0];
    const double u1 = x[1] - m[1];
    const double z0 = L[0] * u0;
    const double z1 = L[2] * u0 + L[3] * u1;
    return z0 * z0 + z1 * z1;
  }
  double q = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c <= r; ++c) z += L[r * d + c] * (x[c] - m[c]);
    q += z * z;
  }
  return q;
}

double GaussianMixture::log_component(std::size_t k, std::span<const double> x) const {
  return log_norm_[k] - 0.5 * mahalanobis(k, x);
}

void GaussianMixture::log_joint(std::span<const double> x, std::span<double> out) const {
  for (std::size_t k = 0; k < weights_.size(); ++k) out[k] = log_w_[k] + log_component(k, x);
}

double GaussianMixture::log_density(std::span<const double> x) const {
  const std::size_t K = weights_.size();
  if (K == 1) return log_component(0, x);
  double buf[64];
  std::vector<double> heap;
  double* lj = buf;
  if (K > 64) {
    heap.resize(K);
    lj = heap.data();
  }
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    lj[k] = log_w_[k] + log_component(k, x);
    m = std::max(m, lj[k]);
  }
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += std::exp(lj[k] - m);
  return m + std::log(s);
}

void GaussianMixture::grad_log_density(std::span<const double> x, std::span<double> out) const {
  const std::size_t K = weights_.size();
  const std::size_t d = dim_;
  std::vector<double> lj(K), z(d);
  log_joint(x, lj);
  const double top = *std::max_element(lj.begin(), lj.end());
  double s = 0.0;
  for (double v : lj) s += std::exp(v - top);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double r = std::exp(lj[k] - top) / s;
    if (r == 0.0) continue;
    // -S^{-1}(x - m) = -L^{-T} L^{-1} (x - m)
    const double* L = inv_chol_.data() + k * d * d;
    const double* m = means_[k].data();
    for (std::size_t a = 0; a < d; ++a) {
      double v = 0.0;
      for (std::size_t c = 0; c <= a; ++c) v += L[a * d + c] * (x[c] - m[c]);
      z[a] = v;
    }
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      for (std::size_t a = c; a < d; ++a) v += L[a * d + c] * z[a];
      out[c] -= r * v;
    }
  }
}

std::size_t GaussianMixture::sample_component(Rng& rng) const {
  if (weights_.size() == 1) return 0;
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cum_w_.begin(), cum_w_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum_w_.begin()), weights_.size() - 1);
}

void GaussianMixture::sample(Rng& rng, std::span<double> out) const {
  const std::size_t k = sample_component(rng);
  const std::size_t d = dim_;
  double zbuf[16];
  std::vector<double> heap;
  double* z = zbuf;
  if (d > 16) {
    heap.resize(d);
    z = heap.data();
  }
  for (std::size_t j = 0; j < d; ++j) z[j] = standard_normal(rng);
  const Eigen::MatrixXd& L = chol_[k];
  for (std::size_t r = 0; r < d; ++r) {
    double v = means_[k][static_cast<Eigen::Index>(r)];
    for (std::size_t c = 0; c <= r; ++c) v += L(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * z[c];
    out[r] = v;
  }
}

}  // namespace em2c
