#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "em2c/kernels.hpp"
#include "em2c/particle_cloud.hpp"
#include "em2c/projection.hpp"
#include "em2c/rng.hpp"
#include "em2c/targets.hpp"

namespace em2c {

/// Single RW Metropolis chain; row s holds the state after step s + 1.
/// Throws InputError if log pi(x0) is not finite.
Matrix run_rw_mcmc(const Target& target, std::span<const double> x0, double sigma, std::size_t n_iter,
                   Rng& rng, KernelStats* stats = nullptr);

/// Independent chains, one per row of start, each run for kernel.n_steps
/// transitions on its own substream (seed, kBaseline, 0, i). Returns the
/// final states.
Matrix run_mcmc_population(const Target& target, const Matrix& start, const KernelSpec& kernel,
                           std::uint64_t seed, KernelStats* stats = nullptr);

/// Per-particle transition count of a single chain matched to an EM2C run
/// with n_K kernel steps per iteration and T iterations.
inline std::size_t matched_chain_length(std::size_t n_k, std::size_t n_iterations) {
  return n_k * n_iterations;
}

struct AisConfig {
  std::size_t n_temps = 40;  // L; beta_l = l / L
  double sigma = 1.0;        // RW scale; 0 freezes the particles
  std::size_t n_steps = 1000;  // RW steps per temperature
  std::size_t n_particles = 1000;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless L >= 1, sigma >= 0 and N >= 1.
  void validate() const;
  double beta(std::size_t l) const {
    return static_cast<double>(l) / static_cast<double>(n_temps);
  }
};

struct AisResult {
  /// Final positions with accumulated log-weights; flagged particles carry -inf.
  ParticleCloud cloud;
  std::size_t flagged = 0;
  KernelStats stats;
};

/// Annealed importance sampling along (1 - beta) log mu0 + beta log pi. At
/// each temperature the weight increment (beta_l - beta_{l-1}) (log pi - log
/// mu0) is added before the RW moves targeting level l.
AisResult run_ais(const Target& target, const TensorizedGmm& initial, const AisConfig& cfg);

}  // namespace em2c
