#include "em2c/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "em2c/errors.hpp"
#include "em2c/parallel.hpp"

namespace em2c {

void MetricConfig::validate() const {
  if (n_projections < 1) throw ConfigError("n_projections must be >= 1");
  if (n_samples < 1) throw ConfigError("metric n_samples must be >= 1");
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("wasserstein_1d: length mismatch");
  if (a.empty()) throw InputError("wasserstein_1d: empty input");
  if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end())) {
    throw InputError("wasserstein_1d: inputs must be sorted");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

Matrix random_directions(std::size_t k, std::size_t d, Rng& rng) {
  Matrix dirs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < dirs.rows(); ++i) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < dirs.cols(); ++j) dirs(i, j) = standard_normal(rng);
      norm = dirs.row(i).norm();
    } while (norm == 0.0);
    dirs.row(i) /= norm;
  }
  return dirs;
}

double sliced_wasserstein(const Matrix& a, const Matrix& b, std::size_t k, Rng& rng) {
  if (a.rows() != b.rows()) throw InputError("sliced_wasserstein: sample counts differ");
  if (a.cols() != b.cols()) throw InputError("sliced_wasserstein: dimensions differ");
  if (a.rows() == 0) throw InputError("sliced_wasserstein: empty clouds");
  if (k < 1) throw InputError("sliced_wasserstein: need at least one projection");
  const Matrix dirs = random_directions(k, static_cast<std::size_t>(a.cols()), rng);
  std::vector<double> per_dir(k);
  parallel_for(k, [&](std::size_t p) {
    const auto theta = dirs.row(static_cast<Eigen::Index>(p)).transpose();
    Vector pa = a * theta;
    Vector pb = b * theta;
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pa.size(); ++i) {
      const double diff = pa[i] - pb[i];
      acc += diff * diff;
    }
    per_dir[p] = acc / static_cast<double>(pa.size());
  });
  double total = 0.0;
  for (double v : per_dir) total += v;
  return std::sqrt(total / static_cast<double>(k));
}

double sliced_wasserstein(const Matrix& a, const Matrix& b, const MetricConfig& cfg) {
  cfg.validate();
  Rng rng = make_stream(cfg.seed, Stream::kMetric);
  return sliced_wasserstein(a, b, cfg.n_projections, rng);
}

double mean_pairwise_distance(const Matrix& a, const Matrix& b, bool exclude_diagonal) {
  if (a.cols() != b.cols()) throw InputError("mean_pairwise_distance: dimensions differ");
  const std::size_t na = static_cast<std::size_t>(a.rows());
  const std::size_t nb = static_cast<std::size_t>(b.rows());
  if (na == 0 || nb == 0) throw InputError("mean_pairwise_distance: empty input");
  const std::size_t d = static_cast<std::size_t>(a.cols());
  constexpr std::size_t kTile = 256;
  const std::size_t tiles = (na + kTile - 1) / kTile;
  std::vector<double> tile_sum(tiles, 0.0);
  parallel_for(tiles, [&](std::size_t t) {
    const std::size_t i_end = std::min(na, (t + 1) * kTile);
    double tile_acc = 0.0;
    for (std::size_t j0 = 0; j0 < nb; j0 += kTile) {
      const std::size_t j_end = std::min(nb, j0 + kTile);
      for (std::size_t i = t * kTile; i < i_end; ++i) {
        const double* x = a.data() + i * d;
        double row_acc = 0.0;
        for (std::size_t j = j0; j < j_end; ++j) {
          if (exclude_diagonal && i == j) continue;
          const double* y = b.data() + j * d;
          double s = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double diff = x[c] - y[c];
            s += diff * diff;
          }
          row_acc += std::sqrt(s);
        }
        tile_acc += row_acc;
      }
    }
    tile_sum[t] = tile_acc;
  });
  double total = 0.0;
  for (double v : tile_sum) total += v;
  double pairs = static_cast<double>(na) * static_cast<double>(nb);
  if (exclude_diagonal) pairs -= static_cast<double>(std::min(na, nb));
  return pairs > 0.0 ? total / pairs : 0.0;
}

double energy_distance(const Matrix& a, const Matrix& b, bool u_statistic) {
  const double ab = mean_pairwise_distance(a, b, false);
  const double aa = mean_pairwise_distance(a, a, u_statistic);
  const double bb = mean_pairwise_distance(b, b, u_statistic);
  return 2.0 * ab - aa - bb;
}

Matrix weighted_resample(const ParticleCloud& cloud, std::size_t n, Rng& rng) {
  const std::vector<double> w = cloud.normalized_weights();
  std::vector<double> cum(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) cum[i] = (acc += w[i]);
  cum.back() = 1.0;
  Matrix out(static_cast<Eigen::Index>(n), cloud.points.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = std::upper_bound(cum.begin(), cum.end(), uniform01(rng));
    const auto src = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), w.size() - 1);
    out.row(static_cast<Eigen::Index>(i)) = cloud.points.row(static_cast<Eigen::Index>(src));
  }
  return out;
}

}  // namespace em2c
