#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace em2c {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> row(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<double> row(Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// log(sum(exp(v))) without overflow; -inf for empty or all -inf input.
double log_sum_exp(std::span<const double> v);

/// Self-normalized weights exp(v - logsumexp(v)). Throws DegenerateWeightsError
/// when every entry is -inf.
std::vector<double> normalize_log_weights(std::span<const double> log_w);

/// (sum w)^2 / sum w^2 on the self-normalized weights.
double effective_sample_size(std::span<const double> log_w);

/// N points in R^d with unnormalized log-weights.
struct ParticleCloud {
  Matrix points;
  Vector log_weights;

  ParticleCloud() = default;
  explicit ParticleCloud(Matrix pts);
  ParticleCloud(Matrix pts, Vector log_w);

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }

  std::vector<double> normalized_weights() const;
  double ess() const;
  bool has_uniform_weights() const;

  /// Throws InputError on NaN entries or shape mismatch.
  void validate() const;
};

/// Flat float64 dump: "EM2CPART", u32 N, u32 d (little-endian), then N*d
/// row-major values.
void write_particles(const std::filesystem::path& path, const Matrix& points);
Matrix read_particles(const std::filesystem::path& path);

}  // namespace em2c
