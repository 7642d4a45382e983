#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "em2c/errors.hpp"
#include "em2c/metrics.hpp"

using namespace em2c;

namespace {

Matrix gaussian_cloud(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
  Rng rng = make_stream(seed, Stream::kReference);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = shift + standard_normal(rng);
  return m;
}

}  // namespace

TEST_CASE("one-dimensional Wasserstein examples") {
  std::vector<double> a{0.0, 2.0}, b{1.0, 3.0};
  CHECK(wasserstein_1d(a, b) == 1.0);
  CHECK(wasserstein_1d(a, a) == 0.0);
  std::vector<double> c{-1.5, 0.25, 4.0}, d(3);
  for (int i = 0; i < 3; ++i) d[i] = c[i] + 2.5;
  CHECK(wasserstein_1d(c, d) == 2.5);
  std::vector<double> unsorted{1.0, 0.0};
  CHECK_THROWS_AS(wasserstein_1d(unsorted, a), InputError);
  std::vector<double> shorter{1.0};
  CHECK_THROWS_AS(wasserstein_1d(shorter, a), InputError);
}

TEST_CASE("random directions are unit vectors") {
  Rng rng = make_stream(1, Stream::kMetric);
  const Matrix th = random_directions(50, 3, rng);
  for (Eigen::Index i = 0; i < th.rows(); ++i) CHECK(th.row(i).norm() == doctest::Approx(1.0));
}

TEST_CASE("sliced Wasserstein of identical clouds is zero") {
  const Matrix a = gaussian_cloud(500, 3, 0.0, 2);
  MetricConfig cfg;
  CHECK(sliced_wasserstein(a, a, cfg) == 0.0);
}

TEST_CASE("sliced Wasserstein in one dimension equals the 1D distance") {
  const Matrix a = gaussian_cloud(300, 1, 0.0, 3);
  const Matrix b = gaussian_cloud(300, 1, 0.7, 4);
  std::vector<double> sa(a.data(), a.data() + a.size()), sb(b.data(), b.data() + b.size());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double w = wasserstein_1d(sa, sb);
  for (std::size_t k : {1u, 10u, 100u}) {
    Rng rng = make_stream(k, Stream::kMetric);
    CHECK(sliced_wasserstein(a, b, k, rng) == doctest::Approx(w).epsilon(1e-12));
  }
}

TEST_CASE("sliced Wasserstein of a shifted cloud") {
  const Matrix a = gaussian_cloud(1000, 2, 0.0, 5);
  Matrix b = a;
  const Eigen::RowVector2d v(3.0, 4.0);
  b.rowwise() += v;
  Rng rng = make_stream(5, Stream::kMetric);
  const double sw = sliced_wasserstein(a, b, 10000, rng);
  CHECK(sw == doctest::Approx(v.norm() / std::sqrt(2.0)).epsilon(0.02));
}

TEST_CASE("sliced Wasserstein is symmetric and translation invariant") {
  const Matrix a = gaussian_cloud(400, 4, 0.0, 6);
  const Matrix b = gaussian_cloud(400, 4, 1.0, 7);
  MetricConfig cfg;
  cfg.seed = 3;
  CHECK(sliced_wasserstein(a, b, cfg) == sliced_wasserstein(b, a, cfg));
  const Matrix a2 = (a.array() + 7.25).matrix();
  const Matrix b2 = (b.array() + 7.25).matrix();
  CHECK(sliced_wasserstein(a2, b2, cfg) ==
        doctest::Approx(sliced_wasserstein(a, b, cfg)).epsilon(1e-10));
}

TEST_CASE("sliced Wasserstein grows with separation") {
  MetricConfig cfg;
  cfg.seed = 8;
  double previous = -1.0;
  for (double gap : {0.0, 1.0, 2.0, 4.0}) {
    const double sw = sliced_wasserstein(gaussian_cloud(500, 2, 0.0, 9),
                                         gaussian_cloud(500, 2, gap, 10), cfg);
    CHECK(sw > previous);
    previous = sw;
  }
}

TEST_CASE("energy distance examples") {
  const Matrix a = gaussian_cloud(300, 2, 0.0, 11);
  CHECK(energy_distance(a, a) == 0.0);
  Matrix zero = Matrix::Zero(1, 1), c(1, 1);
  c << -2.5;
  CHECK(energy_distance(zero, c) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("energy distance matches a direct double sum") {
  const Matrix a = gaussian_cloud(57, 3, 0.0, 12);
  const Matrix b = gaussian_cloud(43, 3, 0.5, 13);
  const auto mean_dist = [](const Matrix& x, const Matrix& y) {
    double s = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.rows(); ++j) s += (x.row(i) - y.row(j)).norm();
    }
    return s / static_cast<double>(x.rows() * y.rows());
  };
  const double expected = 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
  CHECK(energy_distance(a, b) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(mean_pairwise_distance(a, b) == doctest::Approx(mean_dist(a, b)).epsilon(1e-12));
}

TEST_CASE("energy distance null case") {
  const Matrix a = gaussian_cloud(10000, 2, 0.0, 14);
  const Matrix b = gaussian_cloud(10000, 2, 0.0, 15);
  const double ed = energy_distance(a, b);
  CHECK(std::abs(ed) < 0.01);
  CHECK(ed > -1e-12);
}

TEST_CASE("U-statistic energy distance drops the diagonal") {
  const Matrix a = gaussian_cloud(20, 2, 0.0, 16);
  const Matrix b = gaussian_cloud(30, 2, 0.2, 17);
  double aa = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.rows(); ++j) aa += (a.row(i) - a.row(j)).norm();
  }
  CHECK(mean_pairwise_distance(a, a, true) == doctest::Approx(aa / (20.0 * 19.0)).epsilon(1e-12));
  CHECK(energy_distance(a, b, true) < energy_distance(a, b, false));
}

TEST_CASE("weighted resampling follows the weights") {
  Matrix pts(2, 1);
  pts << -1.0, 1.0;
  Vector lw(2);
  lw << std::log(0.25), std::log(0.75);
  Rng rng = make_stream(18, Stream::kMetric);
  const Matrix out = weighted_resample(ParticleCloud(pts, lw), 40000, rng);
  const double right = static_cast<double>((out.col(0).array() > 0).count()) / 40000.0;
  CHECK(std::abs(right - 0.75) < 0.01);
}

TEST_CASE("metric config validation") {
  MetricConfig cfg;
  cfg.n_projections = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
