#include "em2c/exact_grid.hpp"

#include <cassert>
#include <cmath>
#include <limits>

#include "em2c/errors.hpp"
#include "em2c/targets.hpp"

namespace em2c {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse(const Vector& v) { return log_sum_exp({v.data(), static_cast<std::size_t>(v.size())}); }

void require_same_grid(const GridMeasure& a, const GridMeasure& b) {
  if (a.size() != b.size()) throw InputError("grid measures have different sizes");
}

void require_mutual_support(const GridMeasure& mu, const GridMeasure& pi) {
  for (Eigen::Index i = 0; i < mu.log_mass.size(); ++i) {
    if ((mu.log_mass[i] == kNegInf) != (pi.log_mass[i] == kNegInf)) {
      throw DomainError("measures are not mutually absolutely continuous on the grid");
    }
  }
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

void GridMeasure::validate() const {
  if (grid.size() < 2) throw InputError("grid measure needs at least 2 cells");
  if (grid.size() != log_mass.size()) throw InputError("grid and mass sizes differ");
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InputError("grid must be strictly increasing");
  }
  if (normalized && std::abs(mass().sum() - 1.0) > 1e-12) {
    throw InputError("normalized grid measure does not sum to 1");
  }
}

GridKernel GridKernel::identity(std::size_t m) {
  GridKernel k;
  k.matrix = Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  return k;
}

void GridKernel::validate() const {
  if (matrix.rows() != matrix.cols()) throw InputError("grid kernel must be square");
  if ((matrix.array() < 0.0).any()) throw InputError("grid kernel has negative entries");
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    if (std::abs(matrix.row(i).sum() - 1.0) > 1e-10) throw InputError("grid kernel row does not sum to 1");
  }
}

Vector uniform_grid(double lo, double hi, std::size_t m) {
  if (m < 2 || !(hi > lo)) throw InputError("uniform_grid needs m >= 2 and hi > lo");
  return Vector::LinSpaced(static_cast<Eigen::Index>(m), lo, hi);
}

GridMeasure normalize(GridMeasure m) {
  const double z = lse(m.log_mass);
  if (!std::isfinite(z)) throw DegenerateWeightsError("grid measure has no finite mass");
  m.log_mass.array() -= z;
  m.normalized = true;
  return m;
}

GridMeasure discretize(const Vector& grid, const std::function<double(double)>& log_density) {
  GridMeasure m;
  m.grid = grid;
  m.log_mass.resize(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) m.log_mass[i] = log_density(grid[i]);
  m = normalize(std::move(m));
  m.validate();
  return m;
}

GridMeasure exact_emd_update(const GridMeasure& mu, const GridMeasure& pi, double epsilon) {
  require_same_grid(mu, pi);
  require_mutual_support(mu, pi);
  GridMeasure out;
  out.grid = mu.grid;
  out.log_mass.resize(mu.log_mass.size());
  for (Eigen::Index i = 0; i < mu.log_mass.size(); ++i) {
    const double a = mu.log_mass[i], b = pi.log_mass[i];
    out.log_mass[i] = (a == kNegInf) ? kNegInf : (1.0 - epsilon) * a + epsilon * b;
  }
  return normalize(std::move(out));
}

GridMeasure push_forward(const GridMeasure& mu, const GridKernel& k) {
  if (k.size() != mu.size()) throw InputError("kernel and measure sizes differ");
  const double shift = mu.log_mass.maxCoeff();
  const Vector w = (mu.log_mass.array() - shift).exp();
  const Vector pushed = k.matrix.transpose() * w;
  GridMeasure out;
  out.grid = mu.grid;
  out.log_mass = pushed.array().log() + shift;
  out.normalized = mu.normalized;
  return out;
}

namespace {

// log (pi/mu)^eps + log nu per cell, -inf where mu has no mass.
Vector tilted(const GridMeasure& mu, const GridMeasure& pi, const Vector& log_nu, double epsilon) {
  Vector out(mu.log_mass.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double a = mu.log_mass[i];
    out[i] = (a == kNegInf || log_nu[i] == kNegInf) ? kNegInf
                                                    : epsilon * (pi.log_mass[i] - a) + log_nu[i];
  }
  return out;
}

}  // namespace

GridMeasure exact_em2c_update(const GridMeasure& mu, const GridMeasure& pi, const GridKernel& k,
                              double epsilon, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in (0, 1]");
  const GridMeasure mirror = exact_emd_update(mu, pi, epsilon);
  if (lambda == 1.0) return mirror;
  GridMeasure explore;
  explore.grid = mu.grid;
  explore.log_mass = tilted(mu, pi, push_forward(mu, k).log_mass, epsilon);
  explore = normalize(std::move(explore));
  GridMeasure out;
  out.grid = mu.grid;
  out.log_mass.resize(mu.log_mass.size());
  const double la = std::log(lambda), lb = std::log1p(-lambda);
  for (Eigen::Index i = 0; i < out.log_mass.size(); ++i) {
    const double a = la + mirror.log_mass[i], b = lb + explore.log_mass[i];
    const double m = std::max(a, b);
    out.log_mass[i] = m == kNegInf ? kNegInf : m + std::log(std::exp(a - m) + std::exp(b - m));
  }
  return normalize(std::move(out));
}

double adaptive_lambda(const GridMeasure& mu, const GridMeasure& pi, const GridKernel& k,
                       double epsilon, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw InputError("beta must lie in (0, 1]");
  require_same_grid(mu, pi);
  require_mutual_support(mu, pi);
  // A <= 0 by Jensen; rounding can push it slightly above once mu ~ pi.
  const double a = std::min(0.0, lse(tilted(mu, pi, mu.log_mass, epsilon)));
  const double b = lse(tilted(mu, pi, push_forward(mu, k).log_mass, epsilon));
  if (b > 0.0) {
    assert(b - a > 0.0);
    return b / (b - a);
  }
  return beta;
}

double kl_grid(const GridMeasure& p, const GridMeasure& q, bool* infinite) {
  require_same_grid(p, q);
  if (infinite) *infinite = false;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.log_mass.size(); ++i) {
    const double lp = p.log_mass[i];
    if (lp == kNegInf) continue;
    if (q.log_mass[i] == kNegInf) {
      if (infinite) *infinite = true;
      return std::numeric_limits<double>::infinity();
    }
    acc += std::exp(lp) * (lp - q.log_mass[i]);
  }
  return acc;
}

double tv_grid(const GridMeasure& p, const GridMeasure& q) {
  require_same_grid(p, q);
  return 0.5 * (p.mass() - q.mass()).cwiseAbs().sum();
}

GridKernel discretize_rw_kernel(const GridMeasure& pi, double sigma) {
  if (!(sigma > 0.0)) throw InputError("sigma must be positive");
  const auto m = static_cast<Eigen::Index>(pi.size());
  Matrix q(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double z = (pi.grid[j] - pi.grid[i]) / sigma;
      q(i, j) = std::exp(-0.5 * z * z);
    }
  }
  q /= q.rowwise().sum().maxCoeff();
  GridKernel k;
  k.matrix = Matrix::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      const double r = pi.log_mass[j] - pi.log_mass[i];
      const double v = q(i, j) * (r >= 0.0 ? 1.0 : std::exp(r));
      k.matrix(i, j) = v;
      off += v;
    }
    k.matrix(i, i) = 1.0 - off;
  }
  return k;
}

GridKernel discretize_ula_kernel(const Vector& grid, const std::function<double(double)>& grad_log_pi,
                                 double gamma) {
  if (!(gamma > 0.0)) throw InputError("gamma must be positive");
  const auto m = grid.size();
  Vector edges(m + 1);
  edges[0] = -std::numeric_limits<double>::infinity();
  edges[m] = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 1; j < m; ++j) edges[j] = 0.5 * (grid[j - 1] + grid[j]);
  const double s = std::sqrt(2.0 * gamma);
  GridKernel k;
  k.matrix.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double mean = grid[i] + gamma * grad_log_pi(grid[i]);
    double prev = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = j + 1 == m ? 1.0 : normal_cdf((edges[j + 1] - mean) / s);
      k.matrix(i, j) = std::max(0.0, c - prev);
      prev = c;
    }
    k.matrix.row(i) /= k.matrix.row(i).sum();
  }
  return k;
}

GridMeasure stationary(const GridKernel& k, const GridMeasure& init, double tol, std::size_t max_iter) {
  GridMeasure cur = normalize(init);
  for (std::size_t it = 0; it < max_iter; ++it) {
    GridMeasure next = normalize(push_forward(cur, k));
    const double change = tv_grid(cur, next);
    cur = std::move(next);
    if (change < tol) break;
  }
  return cur;
}

ContractionStudy run_contraction_study(const ContractionStudyConfig& cfg) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (cfg.lambda > 1.0) throw ConfigError("lambda must lie in (0, 1]");
  const GaussianMixture target = bimodal_1d_base();
  const Vector grid = uniform_grid(cfg.lo, cfg.hi, cfg.grid_size);
  const GridMeasure pi = discretize(grid, [&](double x) { return target.log_density(std::span<const double>(&x, 1)); });
  GridMeasure mu = discretize(grid, [](double x) { return -0.5 * x * x; });
  GridKernel k;
  if (cfg.kernel == GridKernelKind::kRandomWalk) {
    k = discretize_rw_kernel(pi, cfg.step);
  } else {
    k = discretize_ula_kernel(
        grid,
        [&](double x) {
          double g = 0.0;
          target.grad_log_density(std::span<const double>(&x, 1), std::span<double>(&g, 1));
          return g;
        },
        cfg.step);
  }
  ContractionStudy study;
  study.kernel_bias_tv = tv_grid(pi, stationary(k, pi));
  study.rows.push_back({0, kl_grid(pi, mu), tv_grid(pi, mu), std::numeric_limits<double>::quiet_NaN()});
  for (std::size_t t = 1; t <= cfg.n_iterations; ++t) {
    const double lambda = cfg.lambda > 0.0 ? cfg.lambda : adaptive_lambda(mu, pi, k, cfg.epsilon, cfg.beta);
    mu = exact_em2c_update(mu, pi, k, cfg.epsilon, lambda);
    study.rows.push_back({t, kl_grid(pi, mu), tv_grid(pi, mu), lambda});
  }
  return study;
}

}  // namespace em2c
