#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "em2c/errors.hpp"
#include "em2c/projection.hpp"

using namespace em2c;

namespace {

Matrix two_clusters(std::size_t n_each, double gap, std::uint64_t seed) {
  Rng rng = make_stream(seed, Stream::kInitial);
  Matrix m(static_cast<Eigen::Index>(2 * n_each), 2);
  for (std::size_t i = 0; i < 2 * n_each; ++i) {
    const double c = i < n_each ? 0.0 : gap;
    m(static_cast<Eigen::Index>(i), 0) = c + standard_normal(rng);
    m(static_cast<Eigen::Index>(i), 1) = c + standard_normal(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("kmeans++ with k = 1 picks a sample") {
  const Matrix z = two_clusters(10, 5, 1);
  Rng rng = make_stream(1, Stream::kProjection);
  const Matrix c = kmeanspp_init(z, 1, rng);
  bool found = false;
  for (Eigen::Index i = 0; i < z.rows(); ++i) found = found || z.row(i) == c.row(0);
  CHECK(found);
}

TEST_CASE("kmeans++ with k = N returns a permutation of the points") {
  const Matrix z = two_clusters(6, 5, 2);
  Rng rng = make_stream(2, Stream::kProjection);
  const Matrix c = kmeanspp_init(z, 12, rng);
  std::set<std::pair<double, double>> a, b;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    a.insert({z(i, 0), z(i, 1)});
    b.insert({c(i, 0), c(i, 1)});
  }
  CHECK(a == b);
}

TEST_CASE("kmeans++ puts one center in each of two far clusters") {
  int hits = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Matrix z(200, 2);
    for (Eigen::Index i = 0; i < 200; ++i) {
      const double c = i < 100 ? 0.0 : 1000.0;
      z(i, 0) = c + 0.01 * static_cast<double>(i % 10);
      z(i, 1) = c + 0.01 * static_cast<double>(i / 10 % 10);
    }
    Rng rng = make_stream(s, Stream::kProjection);
    const Matrix c = kmeanspp_init(z, 2, rng);
    hits += (c(0, 0) < 500) != (c(1, 0) < 500) ? 1 : 0;
  }
  CHECK(hits >= 198);
}

TEST_CASE("single component fit is the regularized sample moments") {
  const Matrix z = two_clusters(500, 3, 3);
  EmFitConfig cfg;
  cfg.k0 = 1;
  cfg.cov_reg = 1e-3;
  Rng rng = make_stream(3, Stream::kProjection);
  const auto fit = em_fit(z, cfg, rng);
  const Eigen::RowVectorXd mu = z.colwise().mean();
  const Matrix centered = z.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(z.rows()) +
                              cfg.cov_reg * Eigen::MatrixXd::Identity(2, 2);
  CHECK((fit.model.mean(0) - mu.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((fit.model.covariance(0) - cov).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(fit.model.weights()[0] == doctest::Approx(1.0));
}

TEST_CASE("two separated clusters are recovered") {
  const Matrix z = two_clusters(5000, 10, 4);
  EmFitConfig cfg;
  cfg.k0 = 2;
  Rng rng = make_stream(4, Stream::kProjection);
  const auto fit = em_fit(z, cfg, rng);
  std::vector<std::size_t> order{0, 1};
  if (fit.model.mean(0)(0) > fit.model.mean(1)(0)) std::swap(order[0], order[1]);
  for (int c = 0; c < 2; ++c) {
    const auto& m = fit.model.mean(order[c]);
    CHECK(std::abs(m(0) - 10.0 * c) < 0.1);
    CHECK(std::abs(m(1) - 10.0 * c) < 0.1);
    CHECK(std::abs(fit.model.weights()[order[c]] - 0.5) < 0.03);
  }
}

TEST_CASE("EM objective never decreases between reseeds") {
  Rng data_rng = make_stream(5, Stream::kInitial);
  const auto truth = TensorizedGmm(
      2, {GaussianMixture({0.3, 0.3, 0.4},
                          {Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 1), Eigen::Vector2d(-2, 4)},
                          {Eigen::MatrixXd::Identity(2, 2), 0.5 * Eigen::MatrixXd::Identity(2, 2),
                           2.0 * Eigen::MatrixXd::Identity(2, 2)})});
  const Matrix z = truth.sample(3000, data_rng);
  for (std::size_t k : {2u, 3u, 5u, 8u}) {
    EmFitConfig cfg;
    cfg.k0 = k;
    Rng rng = make_stream(k, Stream::kProjection);
    const auto fit = em_fit(z, cfg, rng);
    REQUIRE(fit.objective_trace.size() >= 1);
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
      const bool reseeded = std::find(fit.reseed_iterations.begin(), fit.reseed_iterations.end(),
                                      i) != fit.reseed_iterations.end();
      if (!reseeded) CHECK(fit.objective_trace[i] >= fit.objective_trace[i - 1] - 1e-8);
    }
  }
}

TEST_CASE("refitting on samples from a fitted model recovers it") {
  const GaussianMixture g({0.3, 0.7}, {Eigen::Vector2d(-5, 0), Eigen::Vector2d(5, 2)},
                          {Eigen::MatrixXd::Identity(2, 2), 0.5 * Eigen::MatrixXd::Identity(2, 2)});
  const TensorizedGmm model(2, {g});
  Rng rng = make_stream(6, Stream::kInitial);
  const Matrix z = model.sample(10000, rng);
  EmFitConfig cfg;
  cfg.k0 = 2;
  Rng fit_rng = make_stream(6, Stream::kProjection);
  const auto fit = em_fit(z, cfg, fit_rng);
  const std::size_t left = fit.model.mean(0)(0) < 0 ? 0 : 1;
  CHECK((fit.model.mean(left) - g.mean(0)).cwiseAbs().maxCoeff() < 0.1);
  CHECK((fit.model.mean(1 - left) - g.mean(1)).cwiseAbs().maxCoeff() < 0.1);
  CHECK(std::abs(fit.model.weights()[left] - 0.3) < 0.05);
}

TEST_CASE("fitted block density integrates to one") {
  const Matrix z = two_clusters(2000, 6, 7);
  EmFitConfig cfg;
  cfg.k0 = 4;
  Rng rng = make_stream(7, Stream::kProjection);
  const auto g = em_fit(z, cfg, rng).model;
  const Eigen::RowVectorXd mu = z.colwise().mean();
  const Eigen::RowVectorXd sd = ((z.rowwise() - mu).array().square().colwise().sum() /
                                 static_cast<double>(z.rows())).sqrt();
  const int n = 400;
  double total = 0;
  const double hx = 16 * sd(0) / n, hy = 16 * sd(1) / n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      std::vector<double> x{mu(0) - 8 * sd(0) + (i + 0.5) * hx, mu(1) - 8 * sd(1) + (j + 0.5) * hy};
      total += std::exp(g.log_density(x)) * hx * hy;
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("tensorized density is the sum of block densities") {
  const auto b0 = GaussianMixture({0.5, 0.5}, {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)},
                                  {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)});
  const auto b1 = GaussianMixture::single(Eigen::Vector2d(3, -1), 2.0 * Eigen::MatrixXd::Identity(2, 2));
  const TensorizedGmm m(2, {b0, b1});
  Rng rng = make_stream(8, Stream::kMetric);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(4);
    for (auto& v : x) v = 3 * standard_normal(rng);
    const double expected = b0.log_density(std::span<const double>(x.data(), 2)) +
                            b1.log_density(std::span<const double>(x.data() + 2, 2));
    CHECK(m.log_density(x) == expected);
  }
}

TEST_CASE("model sampling: mean, empty draw, determinism") {
  const Eigen::Vector2d m(1.0, -2.0);
  Eigen::MatrixXd s(2, 2);
  s << 2.0, 0.5, 0.5, 1.0;
  const TensorizedGmm model(2, {GaussianMixture::single(m, s)});
  Rng rng = make_stream(9, Stream::kProposal);
  const std::size_t n = 20000;
  const Matrix z = model.sample(n, rng);
  const Eigen::RowVectorXd mean = z.colwise().mean();
  CHECK((mean.transpose() - m).norm() < 3 * std::sqrt(s.trace() / n));
  CHECK(model.sample(0, rng).rows() == 0);
  Rng a = make_stream(10, Stream::kProposal), b = make_stream(10, Stream::kProposal);
  CHECK(model.sample(100, a) == model.sample(100, b));
}

TEST_CASE("log-density of model samples matches the negative entropy") {
  const TensorizedGmm model(
      2, {GaussianMixture({0.4, 0.6}, {Eigen::Vector2d(0, 0), Eigen::Vector2d(4, 0)},
                          {Eigen::MatrixXd::Identity(2, 2), 0.5 * Eigen::MatrixXd::Identity(2, 2)})});
  const auto mean_logp = [&](std::size_t n, std::uint64_t seed, double* se) {
    Rng rng = make_stream(seed, Stream::kProposal);
    const Matrix z = model.sample(n, rng);
    double s = 0, s2 = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double v = model.log_density(row(z, i));
      s += v;
      s2 += v * v;
    }
    const double m = s / static_cast<double>(n);
    if (se) *se = std::sqrt((s2 / static_cast<double>(n) - m * m) / static_cast<double>(n));
    return m;
  };
  double se = 0;
  const double small = mean_logp(10000, 11, &se);
  const double large = mean_logp(1000000, 12, nullptr);
  CHECK(std::abs(small - large) < 3 * se);
}

TEST_CASE("fit_tensorized on a single 2D block equals one em_fit call") {
  const Matrix z = two_clusters(300, 6, 13);
  EmFitConfig cfg;
  cfg.k0 = 2;
  const auto t = fit_tensorized(z, 2, cfg, 13, 4);
  Rng rng = make_stream(13, Stream::kProjection, 4, 0);
  const auto direct = em_fit(z, cfg, rng);
  CHECK(t.model.n_blocks() == 1);
  CHECK(t.model.block(0).mean(0) == direct.model.mean(0));
  CHECK(t.model.block(0).covariance(1) == direct.model.covariance(1));
  CHECK_THROWS_AS(fit_tensorized(Matrix::Zero(10, 3), 2, cfg, 1, 0), InputError);
}

TEST_CASE("model text round trip") {
  const TensorizedGmm model(
      2, {GaussianMixture({0.25, 0.75}, {Eigen::Vector2d(0.1, 1.0 / 3.0), Eigen::Vector2d(4, 0)},
                          {Eigen::MatrixXd::Identity(2, 2), 0.5 * Eigen::MatrixXd::Identity(2, 2)}),
          GaussianMixture::single(Eigen::Vector2d(-1, 2), 3.0 * Eigen::MatrixXd::Identity(2, 2))});
  std::stringstream ss;
  write_model(ss, model);
  const auto back = read_model(ss);
  CHECK(back.dim() == 4);
  CHECK(back.n_blocks() == 2);
  Rng rng = make_stream(14, Stream::kMetric);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(4);
    for (auto& v : x) v = 2 * standard_normal(rng);
    CHECK(back.log_density(x) == doctest::Approx(model.log_density(x)).epsilon(1e-14));
  }
  std::stringstream bad("tgmm 2\n");
  CHECK_THROWS_AS(read_model(bad), InputError);
}

TEST_CASE("EM config validation") {
  EmFitConfig cfg;
  cfg.k0 = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.k0 = 2;
  cfg.cov_reg = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
