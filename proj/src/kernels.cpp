#include "em2c/kernels.hpp"

#include <atomic>
#include <limits>

#include "em2c/errors.hpp"
#include "em2c/parallel.hpp"

namespace em2c {

std::string to_string(KernelKind k) { return k == KernelKind::kUla ? "ULA" : "RW"; }

KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "RW" || s == "rw") return KernelKind::kRandomWalk;
  if (s == "ULA" || s == "ula") return KernelKind::kUla;
  throw ConfigError("unknown kernel kind '" + s + "' (expected RW or ULA)");
}

void KernelSpec::validate() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("kernel step must be positive");
  if (n_steps < 1) throw ConfigError("kernel n_steps must be >= 1");
}

std::vector<double> rw_step(const Target& target, std::span<const double> x, double sigma, Rng& rng) {
  std::vector<double> cur(x.begin(), x.end()), scratch(x.size());
  double logp = target.log_density(cur);
  rw_move([&](std::span<const double> p) { return target.log_density(p); }, std::span<double>(cur),
          logp, sigma, rng, std::span<double>(scratch));
  return cur;
}

std::vector<double> ula_step(const Target& target, std::span<const double> x, double gamma, Rng& rng) {
  std::vector<double> g = target.grad_log_density(x);
  const double noise = std::sqrt(2.0 * gamma);
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + gamma * g[j] + noise * standard_normal(rng);
  return out;
}

ParticleCloud apply_kernel(const KernelSpec& spec, const Target& target, const Matrix& points,
                           std::uint64_t seed, Stream purpose, std::uint64_t iteration,
                           KernelStats* stats) {
  spec.validate();
  if (!points.allFinite()) throw InputError("apply_kernel: input cloud has non-finite points");
  if (spec.kind == KernelKind::kUla && !target.has_gradient()) {
    throw UnsupportedOperation(target.name() + ": ULA requires a gradient");
  }
  const std::size_t n = static_cast<std::size_t>(points.rows());
  const std::size_t d = static_cast<std::size_t>(points.cols());
  Matrix out = points;
  Vector log_w = Vector::Zero(static_cast<Eigen::Index>(n));
  std::vector<unsigned char> flagged(n, 0);
  std::vector<std::uint64_t> accepted(n, 0);

  parallel_for(n, [&](std::size_t i) {
    Rng rng = make_stream(seed, purpose, iteration, i);
    auto x = row(out, static_cast<Eigen::Index>(i));
    std::vector<double> scratch(d);
    if (spec.kind == KernelKind::kRandomWalk) {
      const auto lp = [&](std::span<const double> p) { return target.log_density(p); };
      double logp = lp(x);
      for (std::size_t s = 0; s < spec.n_steps; ++s) {
        accepted[i] += rw_move(lp, x, logp, spec.step, rng, std::span<double>(scratch));
      }
    } else {
      const double noise = std::sqrt(2.0 * spec.step);
      for (std::size_t s = 0; s < spec.n_steps; ++s) {
        bool finite = true;
        for (double v : x) finite = finite && std::isfinite(v);
        if (!finite) break;
        try {
          target.grad_log_density(x, scratch);
        } catch (const DomainError&) {
          std::fill(x.begin(), x.end(), std::numeric_limits<double>::quiet_NaN());
          break;
        }
        for (std::size_t j = 0; j < d; ++j) {
          x[j] += spec.step * scratch[j] + noise * standard_normal(rng);
        }
      }
    }
    bool finite = true;
    for (double v : x) finite = finite && std::isfinite(v);
    if (!finite) {
      flagged[i] = 1;
      auto src = row(points, static_cast<Eigen::Index>(i));
      std::copy(src.begin(), src.end(), x.begin());
      log_w[static_cast<Eigen::Index>(i)] = -std::numeric_limits<double>::infinity();
    }
  });

  std::size_t n_flagged = 0;
  std::uint64_t n_accepted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    n_flagged += flagged[i];
    n_accepted += accepted[i];
  }
  if (stats) {
    stats->transitions += static_cast<std::uint64_t>(n) * spec.n_steps;
    stats->accepted += n_accepted;
    stats->flagged += n_flagged;
  }
  if (static_cast<double>(n_flagged) > 0.01 * static_cast<double>(n)) {
    throw DivergenceError("kernel produced non-finite states for " + std::to_string(n_flagged) +
                          " of " + std::to_string(n) + " particles");
  }
  ParticleCloud cloud;
  cloud.points = std::move(out);
  cloud.log_weights = std::move(log_w);
  return cloud;
}

}  // namespace em2c
