#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "em2c/particle_cloud.hpp"

namespace em2c {

/// Point masses on a uniform 1D grid, stored as log-mass.
struct GridMeasure {
  Vector grid;
  Vector log_mass;
  bool normalized = false;

  std::size_t size() const { return static_cast<std::size_t>(grid.size()); }
  Vector mass() const { return log_mass.array().exp(); }

  /// Throws InputError unless M >= 2, the grid is strictly increasing and
  /// sizes match; when normalized, the mass must sum to 1 within 1e-12.
  void validate() const;
};

/// Row-stochastic M x M transition matrix.
struct GridKernel {
  Matrix matrix;

  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
  static GridKernel identity(std::size_t m);
  /// Throws InputError on negative entries or a row sum off by more than 1e-10.
  void validate() const;
};

/// M equally spaced points from lo to hi inclusive.
Vector uniform_grid(double lo, double hi, std::size_t m);

/// Cellwise log-density values renormalized to a pmf.
GridMeasure discretize(const Vector& grid, const std::function<double(double)>& log_density);

GridMeasure normalize(GridMeasure m);

/// (1 - eps) log mu + eps log pi, renormalized. Throws DomainError when one
/// measure has zero mass where the other does not.
GridMeasure exact_emd_update(const GridMeasure& mu, const GridMeasure& pi, double epsilon);

/// Push-forward mu K.
GridMeasure push_forward(const GridMeasure& mu, const GridKernel& k);

/// lambda * F_e(mu) + (1 - lambda) * normalize((pi/mu)^eps * mu K).
GridMeasure exact_em2c_update(const GridMeasure& mu, const GridMeasure& pi, const GridKernel& k,
                              double epsilon, double lambda);

/// A = log sum (pi/mu)^eps mu, B = log sum (pi/mu)^eps muK. Returns B / (B - A)
/// when B > 0 and beta otherwise.
double adaptive_lambda(const GridMeasure& mu, const GridMeasure& pi, const GridKernel& k,
                       double epsilon, double beta);

/// sum p log(p / q) with 0 log 0 = 0. Returns +inf and sets *infinite when
/// p has mass where q has none.
double kl_grid(const GridMeasure& p, const GridMeasure& q, bool* infinite = nullptr);

/// Total variation 0.5 sum |p - q|.
double tv_grid(const GridMeasure& p, const GridMeasure& q);

/// Metropolis matrix: symmetric Gaussian proposal over cells, scaled so that
/// no row exceeds 1, with rejected mass on the diagonal.
GridKernel discretize_rw_kernel(const GridMeasure& pi, double sigma);

/// N(x + gamma * grad(x), 2 gamma) integrated over cells bounded by grid
/// midpoints; tails go to the end cells.
GridKernel discretize_ula_kernel(const Vector& grid, const std::function<double(double)>& grad_log_pi,
                                 double gamma);

/// Power iteration from init until the TV change drops below tol.
GridMeasure stationary(const GridKernel& k, const GridMeasure& init, double tol = 1e-13,
                       std::size_t max_iter = 100000);

enum class GridKernelKind { kRandomWalk, kUla };

struct ContractionStudyConfig {
  double epsilon = 0.5;
  std::size_t n_iterations = 20;
  std::size_t grid_size = 4096;
  double lo = -8.0;
  double hi = 18.0;
  GridKernelKind kernel = GridKernelKind::kRandomWalk;
  double step = 2.0;  // sigma for RW, gamma for ULA
  /// Adaptive lambda when <= 0, fixed value otherwise.
  double lambda = 0.0;
  double beta = 1.0;
};

struct ContractionRow {
  std::size_t t = 0;
  double kl = 0.0;
  double tv = 0.0;
  double lambda = 0.0;
};

struct ContractionStudy {
  std::vector<ContractionRow> rows;
  /// TV(pi, stationary law of the grid kernel).
  double kernel_bias_tv = 0.0;
};

/// Target 0.5 N(0,1) + 0.5 N(10,1), start N(0,1).
ContractionStudy run_contraction_study(const ContractionStudyConfig& cfg);

}  // namespace em2c
