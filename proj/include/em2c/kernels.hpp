#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "em2c/particle_cloud.hpp"
#include "em2c/rng.hpp"
#include "em2c/targets.hpp"

namespace em2c {

enum class KernelKind { kRandomWalk, kUla };

std::string to_string(KernelKind k);
KernelKind parse_kernel_kind(const std::string& s);

/// step is sigma for RW and gamma for ULA.
struct KernelSpec {
  KernelKind kind = KernelKind::kRandomWalk;
  double step = 1.0;
  std::size_t n_steps = 1;

  /// Throws ConfigError unless step > 0 and n_steps >= 1.
  void validate() const;
};

/// One Metropolis random-walk move on an arbitrary log-density, in place.
/// logp caches log_density(x) and is updated on acceptance. Only the
/// log-density difference enters the acceptance test.
template <class LogDensity>
bool rw_move(const LogDensity& log_density, std::span<double> x, double& logp, double sigma,
             Rng& rng, std::span<double> scratch) {
  for (std::size_t j = 0; j < x.size(); ++j) scratch[j] = x[j] + sigma * standard_normal(rng);
  const double logp_new = log_density(std::span<const double>(scratch.data(), x.size()));
  const double log_u = std::log(uniform01(rng));
  if (log_u < logp_new - logp) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = scratch[j];
    logp = logp_new;
    return true;
  }
  return false;
}

/// Single RW Metropolis step targeting pi. Returns the accepted or current state.
std::vector<double> rw_step(const Target& target, std::span<const double> x, double sigma, Rng& rng);

/// x + gamma grad log pi(x) + sqrt(2 gamma) z.
std::vector<double> ula_step(const Target& target, std::span<const double> x, double gamma, Rng& rng);

struct KernelStats {
  std::uint64_t transitions = 0;  // single-step kernel applications
  std::uint64_t accepted = 0;     // RW only
  std::size_t flagged = 0;        // particles that became non-finite
};

/// Propagates every particle n_steps times with its own substream keyed by
/// (seed, purpose, iteration, particle). The output has uniform log-weights
/// except for flagged particles, which keep their input position and get a
/// -inf log-weight. More than 1% flagged throws DivergenceError.
ParticleCloud apply_kernel(const KernelSpec& spec, const Target& target, const Matrix& points,
                           std::uint64_t seed, Stream purpose, std::uint64_t iteration,
                           KernelStats* stats = nullptr);

}  // namespace em2c
