#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "em2c/kernels.hpp"
#include "em2c/particle_cloud.hpp"
#include "em2c/projection.hpp"
#include "em2c/targets.hpp"

namespace em2c {

/// Constant mixing weight (one entry) or one entry per iteration.
struct LambdaSchedule {
  std::vector<double> values{1.0};

  static LambdaSchedule constant(double lambda) { return {{lambda}}; }
  double at(std::size_t t) const;
};

struct ProjectionSpec {
  std::size_t block_dim = 2;
  EmFitConfig em;
};

enum class Resampling { kMultinomial, kSystematic };

struct Em2cConfig {
  double epsilon = 0.8;
  LambdaSchedule lambda;
  std::size_t n_particles = 1000;
  std::size_t n_iterations = 10;
  KernelSpec kernel;
  std::optional<KernelSpec> local_move;
  ProjectionSpec projection;
  Resampling resampling = Resampling::kMultinomial;
  std::uint64_t seed = 0;

  /// Throws ConfigError on any invariant violation (0 < eps <= 1, every
  /// lambda in (0, 1], N >= 1, valid kernels and EM settings).
  void validate() const;
};

/// eps * (log pi(x) - log mu(x)) per row. Points where the proposal density
/// is zero get -inf and are counted in *zero_density. Throws
/// DegenerateWeightsError when every weight is -inf.
std::vector<double> compute_log_weights(const Target& target, const TensorizedGmm& proposal,
                                        const Matrix& points, double epsilon,
                                        std::size_t* zero_density = nullptr);

/// lambda * sum_i w_i delta_{X_i} + (1 - lambda) * sum_i v_i delta_{Y_i}, each
/// branch normalized on its own.
struct EmpiricalMixture {
  Matrix x, y;
  std::vector<double> wx, wy;  // normalized within each branch; empty if unused
  double lambda = 1.0;
  std::size_t warnings = 0;

  std::size_t atoms() const { return static_cast<std::size_t>(x.rows() + y.rows()); }
};

/// Throws DegenerateWeightsError if a branch with positive mass has only
/// -inf weights. When lambda == 1 a degenerate Y branch is dropped with a
/// warning.
EmpiricalMixture build_empirical_mixture(const ParticleCloud& x, const ParticleCloud& y,
                                         double lambda);

struct ResampleResult {
  ParticleCloud cloud;
  /// Atom of each draw: i < x.rows() refers to X_i, otherwise Y_{i - x.rows()}.
  std::vector<std::size_t> source;
};

/// n draws: branch ~ Bernoulli(lambda), then an atom from that branch's
/// categorical. Systematic resampling applies the same two-level rule with a
/// single stratified uniform sequence.
ResampleResult resample(const EmpiricalMixture& mix, std::size_t n, Rng& rng,
                        Resampling kind = Resampling::kMultinomial);

/// n_steps RW moves per particle targeting pi; spec.kind must be RW.
ParticleCloud local_move(const ParticleCloud& cloud, const KernelSpec& spec, const Target& target,
                         std::uint64_t seed, std::uint64_t iteration, KernelStats* stats = nullptr);

struct IterationRecord {
  std::size_t iteration = 0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double ess_x = std::numeric_limits<double>::quiet_NaN();
  double ess_y = std::numeric_limits<double>::quiet_NaN();
  std::size_t zero_density = 0;
  std::size_t flagged = 0;
  std::size_t warnings = 0;
  double projection_objective = std::numeric_limits<double>::quiet_NaN();
  double sw2 = std::numeric_limits<double>::quiet_NaN();
  double ed = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
};

struct IterationOutput {
  TensorizedGmm proposal;
  IterationRecord record;
  /// Z (after the optional local move): the cloud the projection was fit on.
  Matrix resampled;
};

/// One pass of the loop body: X ~ mu^N, Y = K(X), weights against the same
/// mu for both branches, lambda-mixture, resample, optional local move, EM
/// projection.
IterationOutput em2c_iterate(const Target& target, const TensorizedGmm& proposal,
                             const Em2cConfig& cfg, std::size_t t, KernelStats* stats = nullptr);

struct Em2cTrace {
  /// proposals[0] is the initial model; proposals.size() == records.size().
  std::vector<TensorizedGmm> proposals;
  std::vector<IterationRecord> records;
  Matrix last_resampled;
  KernelStats kernel_stats;
  std::optional<std::string> failure;

  const TensorizedGmm& final_proposal() const { return proposals.back(); }
};

/// Called after the initial model (t = 0) and after each iteration t >= 1 to
/// fill metric fields of the record.
using IterationObserver =
    std::function<void(std::size_t t, const TensorizedGmm& proposal, IterationRecord& record)>;

/// Runs cfg.n_iterations iterations. An error stops the run; the trace up to
/// the failing iteration is returned with failure set.
Em2cTrace run_em2c(const Em2cConfig& cfg, const Target& target, const TensorizedGmm& initial,
                   const IterationObserver& observer = {});

}  // namespace em2c
