#include "em2c/baselines.hpp"

#include <cmath>
#include <limits>

#include "em2c/errors.hpp"
#include "em2c/parallel.hpp"

namespace em2c {

Matrix run_rw_mcmc(const Target& target, std::span<const double> x0, double sigma, std::size_t n_iter,
                   Rng& rng, KernelStats* stats) {
  std::vector<double> x(x0.begin(), x0.end()), scratch(x0.size());
  double logp = target.log_density(x);
  if (!std::isfinite(logp)) throw InputError("run_rw_mcmc: log density at x0 is not finite");
  const auto lp = [&](std::span<const double> p) { return target.log_density(p); };
  Matrix out(static_cast<Eigen::Index>(n_iter), static_cast<Eigen::Index>(x.size()));
  std::uint64_t accepted = 0;
  for (std::size_t s = 0; s < n_iter; ++s) {
    accepted += rw_move(lp, std::span<double>(x), logp, sigma, rng, std::span<double>(scratch));
    std::copy(x.begin(), x.end(), row(out, static_cast<Eigen::Index>(s)).begin());
  }
  if (stats) {
    stats->transitions += n_iter;
    stats->accepted += accepted;
  }
  return out;
}

Matrix run_mcmc_population(const Target& target, const Matrix& start, const KernelSpec& kernel,
                           std::uint64_t seed, KernelStats* stats) {
  return apply_kernel(kernel, target, start, seed, Stream::kBaseline, 0, stats).points;
}

void AisConfig::validate() const {
  if (n_temps < 1) throw ConfigError("AIS needs at least one temperature");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("AIS sigma must be >= 0");
  if (n_particles < 1) throw ConfigError("AIS needs at least one particle");
}

AisResult run_ais(const Target& target, const TensorizedGmm& initial, const AisConfig& cfg) {
  cfg.validate();
  if (initial.dim() != target.dim()) throw InputError("AIS: initial and target dimensions differ");
  const std::size_t n = cfg.n_particles;
  const std::size_t d = target.dim();
  Rng init_rng = make_stream(cfg.seed, Stream::kInitial);
  Matrix x = initial.sample(n, init_rng);
  Vector log_w = Vector::Zero(static_cast<Eigen::Index>(n));
  std::vector<std::uint64_t> accepted(n, 0);
  const bool moves = cfg.sigma > 0.0 && cfg.n_steps > 0;

  parallel_for(n, [&](std::size_t i) {
    Rng rng = make_stream(cfg.seed, Stream::kBaseline, 1, i);
    auto xi = row(x, static_cast<Eigen::Index>(i));
    std::vector<double> prop(d);
    double lp = target.log_density(xi);
    double lq = initial.log_density(xi);
    double lw = 0.0;
    for (std::size_t l = 1; l <= cfg.n_temps; ++l) {
      const double b = cfg.beta(l);
      lw += (b - cfg.beta(l - 1)) * (lp - lq);
      if (!std::isfinite(lw)) break;
      if (!moves) continue;
      double cur = (1.0 - b) * lq + b * lp;
      for (std::size_t s = 0; s < cfg.n_steps; ++s) {
        for (std::size_t j = 0; j < d; ++j) prop[j] = xi[j] + cfg.sigma * standard_normal(rng);
        const double lp_new = target.log_density(prop);
        const double lq_new = initial.log_density(prop);
        const double next = (1.0 - b) * lq_new + b * lp_new;
        if (std::log(uniform01(rng)) < next - cur) {
          std::copy(prop.begin(), prop.end(), xi.begin());
          lp = lp_new;
          lq = lq_new;
          cur = next;
          ++accepted[i];
        }
      }
    }
    log_w[static_cast<Eigen::Index>(i)] = lw;
  });

  AisResult out;
  for (std::size_t i = 0; i < n; ++i) {
    double& w = log_w[static_cast<Eigen::Index>(i)];
    if (!std::isfinite(w)) {
      w = -std::numeric_limits<double>::infinity();
      ++out.flagged;
    }
    out.stats.accepted += accepted[i];
  }
  out.stats.flagged = out.flagged;
  out.stats.transitions = moves ? static_cast<std::uint64_t>(n) * cfg.n_temps * cfg.n_steps : 0;
  out.cloud = ParticleCloud(std::move(x), std::move(log_w));
  return out;
}

}  // namespace em2c
