#include <doctest.h>

#include <cmath>
#include <vector>

#include "em2c/baselines.hpp"
#include "em2c/errors.hpp"
#include "em2c/targets.hpp"

using namespace em2c;

TEST_CASE("RW chain with a vanishing step barely moves") {
  const auto t = make_target("gm4");
  Rng rng = make_stream(1, Stream::kBaseline);
  std::vector<double> x0{-10.0, 10.0};
  KernelStats stats;
  const Matrix chain = run_rw_mcmc(*t, x0, 1e-12, 1000, rng, &stats);
  CHECK(chain.rows() == 1000);
  CHECK(stats.accepted == 1000);
  for (Eigen::Index i = 0; i < chain.rows(); ++i) {
    CHECK(std::abs(chain(i, 0) + 10.0) < 1e-9);
    CHECK(std::abs(chain(i, 1) - 10.0) < 1e-9);
  }
}

TEST_CASE("RW chain rejects a start outside the support") {
  const auto t = make_target("normal");
  Rng rng = make_stream(2, Stream::kBaseline);
  std::vector<double> x0{std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(run_rw_mcmc(*t, x0, 1.0, 10, rng), InputError);
}

TEST_CASE("population budget matches the EM2C kernel budget") {
  const auto t = make_target("gm4", {{"d", 4}});
  const std::size_t n_k = 10, n_iter = 25, n = 64;
  const KernelSpec spec{KernelKind::kRandomWalk, 1.0, matched_chain_length(n_k, n_iter)};
  KernelStats stats;
  const Matrix start = Matrix::Constant(static_cast<Eigen::Index>(n), 4, 30.0);
  const Matrix out = run_mcmc_population(*t, start, spec, 3, &stats);
  CHECK(out.rows() == static_cast<Eigen::Index>(n));
  CHECK(stats.transitions == n * n_k * n_iter);
  CHECK(matched_chain_length(n_k, n_iter) == 250);
}

TEST_CASE("AIS with frozen particles telescopes to plain importance weights") {
  const auto t = make_target("gm2");
  const auto init = TensorizedGmm::isotropic_gaussian(Eigen::Vector2d(5.0, 5.0), 25.0, 2);
  for (std::size_t levels : {1u, 3u, 40u}) {
    AisConfig cfg;
    cfg.n_temps = levels;
    cfg.sigma = 0.0;
    cfg.n_steps = 1;
    cfg.n_particles = 200;
    cfg.seed = 4;
    const auto r = run_ais(*t, init, cfg);
    Rng rng = make_stream(4, Stream::kInitial);
    const Matrix x0 = init.sample(200, rng);
    CHECK(r.cloud.points == x0);
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      const double expected = t->log_density(row(x0, i)) - init.log_density(row(x0, i));
      CHECK(r.cloud.log_weights[i] == doctest::Approx(expected).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("AIS with one level is importance sampling followed by moves") {
  const auto t = make_target("normal", {{"d", 2}});
  const auto init = TensorizedGmm::isotropic_gaussian(Eigen::Vector2d(1.0, 0.0), 4.0, 2);
  AisConfig cfg;
  cfg.n_temps = 1;
  cfg.sigma = 0.5;
  cfg.n_steps = 3;
  cfg.n_particles = 100;
  cfg.seed = 5;
  const auto r = run_ais(*t, init, cfg);
  Rng rng = make_stream(5, Stream::kInitial);
  const Matrix x0 = init.sample(100, rng);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    const double expected = t->log_density(row(x0, i)) - init.log_density(row(x0, i));
    CHECK(r.cloud.log_weights[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(r.stats.transitions == 300);
}

TEST_CASE("AIS from the target has zero weights") {
  const auto t = make_target("normal", {{"d", 2}});
  const auto init = TensorizedGmm::isotropic_gaussian(Eigen::Vector2d(0.0, 0.0), 1.0, 2);
  AisConfig cfg;
  cfg.n_temps = 10;
  cfg.sigma = 0.8;
  cfg.n_steps = 2;
  cfg.n_particles = 50;
  const auto r = run_ais(*t, init, cfg);
  CHECK(r.cloud.log_weights.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("AIS configuration validation") {
  AisConfig cfg;
  cfg.n_temps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.n_temps = 4;
  cfg.sigma = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.sigma = 1;
  CHECK(cfg.beta(2) == 0.5);
}
