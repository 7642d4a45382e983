#include "em2c/mirror.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "em2c/errors.hpp"
#include "em2c/parallel.hpp"

namespace em2c {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool all_neg_inf(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == kNegInf; });
}

std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    c[i] = acc;
  }
  if (!c.empty()) c.back() = 1.0;
  return c;
}

std::size_t draw_from(const std::vector<double>& cum, double u) {
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

double LambdaSchedule::at(std::size_t t) const {
  if (values.empty()) throw ConfigError("lambda schedule is empty");
  if (values.size() == 1) return values[0];
  if (t >= values.size()) throw ConfigError("lambda schedule shorter than the iteration count");
  return values[t];
}

void Em2cConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (lambda.values.empty()) throw ConfigError("lambda schedule is empty");
  for (double l : lambda.values) {
    if (!(l > 0.0 && l <= 1.0)) throw ConfigError("every lambda must lie in (0, 1]");
  }
  if (lambda.values.size() > 1 && lambda.values.size() < n_iterations) {
    throw ConfigError("lambda schedule has fewer entries than n_iterations");
  }
  if (n_particles < 1) throw ConfigError("n_particles must be >= 1");
  kernel.validate();
  if (local_move) {
    local_move->validate();
    if (local_move->kind != KernelKind::kRandomWalk) throw ConfigError("local move must be RW");
  }
  if (projection.block_dim < 1) throw ConfigError("projection block_dim must be >= 1");
  projection.em.validate();
}

std::vector<double> compute_log_weights(const Target& target, const TensorizedGmm& proposal,
                                        const Matrix& points, double epsilon,
                                        std::size_t* zero_density) {
  const std::size_t n = static_cast<std::size_t>(points.rows());
  std::vector<double> lw(n);
  std::vector<unsigned char> zero(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto x = row(points, static_cast<Eigen::Index>(i));
    const double lq = proposal.log_density(x);
    const double lp = target.log_density(x);
    if (lq == kNegInf || std::isnan(lq)) {
      zero[i] = 1;
      lw[i] = kNegInf;
    } else if (lp == kNegInf || std::isnan(lp)) {
      lw[i] = kNegInf;
    } else if (epsilon == 0.0) {
      lw[i] = 0.0;
    } else {
      lw[i] = epsilon * (lp - lq);
    }
  });
  std::size_t zeros = 0;
  for (auto z : zero) zeros += z;
  if (zero_density) *zero_density += zeros;
  if (n > 0 && all_neg_inf(lw)) throw DegenerateWeightsError("all importance weights are zero");
  return lw;
}

EmpiricalMixture build_empirical_mixture(const ParticleCloud& x, const ParticleCloud& y,
                                         double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw InputError("mixture lambda must lie in (0, 1]");
  if (x.size() == 0) throw InputError("mixture: empty X branch");
  EmpiricalMixture mix;
  mix.lambda = lambda;
  if (all_neg_inf(as_span(x.log_weights))) {
    throw DegenerateWeightsError("mixture: X branch has only zero weights");
  }
  mix.x = x.points;
  mix.wx = x.normalized_weights();
  if (lambda < 1.0) {
    if (y.size() == 0 || all_neg_inf(as_span(y.log_weights))) {
      throw DegenerateWeightsError("mixture: Y branch has positive mass but only zero weights");
    }
    mix.y = y.points;
    mix.wy = y.normalized_weights();
  } else {
    if (y.size() > 0 && all_neg_inf(as_span(y.log_weights))) ++mix.warnings;
    mix.y = Matrix(0, x.points.cols());
  }
  return mix;
}

ResampleResult resample(const EmpiricalMixture& mix, std::size_t n, Rng& rng, Resampling kind) {
  if (n < 1) throw InputError("resample: n must be >= 1");
  const auto nx = static_cast<std::size_t>(mix.x.rows());
  const auto d = mix.x.cols();
  const bool use_y = mix.lambda < 1.0 && !mix.wy.empty();
  const double lambda = use_y ? mix.lambda : 1.0;

  ResampleResult out;
  out.source.resize(n);
  if (kind == Resampling::kMultinomial) {
    const auto cx = cumulative(mix.wx);
    const auto cy = use_y ? cumulative(mix.wy) : std::vector<double>{};
    for (std::size_t i = 0; i < n; ++i) {
      const double b = uniform01(rng);
      const double u = uniform01(rng);
      out.source[i] = (b < lambda) ? draw_from(cx, u) : nx + draw_from(cy, u);
    }
  } else {
    std::vector<double> mass;
    mass.reserve(mix.wx.size() + mix.wy.size());
    for (double w : mix.wx) mass.push_back(lambda * w);
    if (use_y) {
      for (double w : mix.wy) mass.push_back((1.0 - lambda) * w);
    }
    const auto cm = cumulative(mass);
    const double u0 = uniform01(rng);
    for (std::size_t i = 0; i < n; ++i) {
      out.source[i] = draw_from(cm, (static_cast<double>(i) + u0) / static_cast<double>(n));
    }
  }
  Matrix pts(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = out.source[i];
    pts.row(static_cast<Eigen::Index>(i)) =
        s < nx ? mix.x.row(static_cast<Eigen::Index>(s)) : mix.y.row(static_cast<Eigen::Index>(s - nx));
  }
  out.cloud = ParticleCloud(std::move(pts));
  return out;
}

ParticleCloud local_move(const ParticleCloud& cloud, const KernelSpec& spec, const Target& target,
                         std::uint64_t seed, std::uint64_t iteration, KernelStats* stats) {
  if (spec.kind != KernelKind::kRandomWalk) throw InputError("local move kernel must be RW");
  return apply_kernel(spec, target, cloud.points, seed, Stream::kLocalMove, iteration, stats);
}

IterationOutput em2c_iterate(const Target& target, const TensorizedGmm& proposal,
                             const Em2cConfig& cfg, std::size_t t, KernelStats* stats) {
  if (proposal.dim() != target.dim()) throw InputError("proposal and target dimensions differ");
  const auto start = std::chrono::steady_clock::now();
  IterationOutput out;
  IterationRecord& rec = out.record;
  rec.iteration = t + 1;
  rec.lambda = cfg.lambda.at(t);

  Rng proposal_rng = make_stream(cfg.seed, Stream::kProposal, t);
  ParticleCloud x(proposal.sample(cfg.n_particles, proposal_rng));
  KernelStats kstats;
  ParticleCloud y = apply_kernel(cfg.kernel, target, x.points, cfg.seed, Stream::kKernel, t, &kstats);
  rec.flagged = kstats.flagged;

  const auto lwx = compute_log_weights(target, proposal, x.points, cfg.epsilon, &rec.zero_density);
  x.log_weights = Eigen::Map<const Vector>(lwx.data(), static_cast<Eigen::Index>(lwx.size()));
  rec.ess_x = x.ess();

  // Kernel-flagged particles keep their -inf weight.
  std::vector<double> lwy;
  try {
    lwy = compute_log_weights(target, proposal, y.points, cfg.epsilon, &rec.zero_density);
  } catch (const DegenerateWeightsError&) {
    if (rec.lambda < 1.0) throw;
    lwy.assign(static_cast<std::size_t>(y.points.rows()), kNegInf);
  }
  for (std::size_t i = 0; i < lwy.size(); ++i) {
    if (y.log_weights[static_cast<Eigen::Index>(i)] == kNegInf) lwy[i] = kNegInf;
  }
  y.log_weights = Eigen::Map<const Vector>(lwy.data(), static_cast<Eigen::Index>(lwy.size()));
  rec.ess_y = all_neg_inf(lwy) ? 0.0 : y.ess();

  const double n = static_cast<double>(cfg.n_particles);
  if (rec.ess_x < 0.01 * n) ++rec.warnings;
  if (rec.lambda < 1.0 && rec.ess_y < 0.01 * n) ++rec.warnings;

  EmpiricalMixture mix = build_empirical_mixture(x, y, rec.lambda);
  rec.warnings += mix.warnings;
  Rng resample_rng = make_stream(cfg.seed, Stream::kResample, t);
  ParticleCloud z = resample(mix, cfg.n_particles, resample_rng, cfg.resampling).cloud;
  if (cfg.local_move) z = local_move(z, *cfg.local_move, target, cfg.seed, t, &kstats);

  TensorFitResult fit =
      fit_tensorized(z.points, cfg.projection.block_dim, cfg.projection.em, cfg.seed, t);
  double objective = 0.0;
  for (const auto& b : fit.blocks) objective += b.objective;
  rec.projection_objective = objective;

  if (stats) {
    stats->transitions += kstats.transitions;
    stats->accepted += kstats.accepted;
    stats->flagged += kstats.flagged;
  }
  out.proposal = std::move(fit.model);
  out.resampled = std::move(z.points);
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Em2cTrace run_em2c(const Em2cConfig& cfg, const Target& target, const TensorizedGmm& initial,
                   const IterationObserver& observer) {
  cfg.validate();
  if (initial.dim() != target.dim()) throw InputError("initial proposal and target dimensions differ");
  Em2cTrace trace;
  trace.proposals.push_back(initial);
  IterationRecord first;
  first.iteration = 0;
  if (observer) observer(0, initial, first);
  trace.records.push_back(first);
  for (std::size_t t = 0; t < cfg.n_iterations; ++t) {
    try {
      IterationOutput step = em2c_iterate(target, trace.proposals.back(), cfg, t, &trace.kernel_stats);
      if (observer) observer(t + 1, step.proposal, step.record);
      trace.proposals.push_back(std::move(step.proposal));
      trace.records.push_back(step.record);
      trace.last_resampled = std::move(step.resampled);
    } catch (const Error& e) {
      trace.failure = "iteration " + std::to_string(t + 1) + ": " + e.what();
      break;
    }
  }
  return trace;
}

}  // namespace em2c
