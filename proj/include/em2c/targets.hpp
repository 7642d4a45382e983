#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>

#include "em2c/gaussian_mixture.hpp"
#include "em2c/particle_cloud.hpp"
#include "em2c/rng.hpp"

namespace em2c {

/// Unnormalized log-density with optional gradient and exact sampler.
///
/// The public entry points validate the dimension and forward to the
/// protected virtual hooks. All evaluations are pure, so a target may be
/// shared across threads.
class Target {
 public:
  virtual ~Target() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;

  /// Throws InputError when x.size() != dim().
  double log_density(std::span<const double> x) const;

  virtual bool has_gradient() const { return false; }

  /// Throws UnsupportedOperation without a gradient, DomainError at a
  /// singular point.
  void grad_log_density(std::span<const double> x, std::span<double> out) const;
  std::vector<double> grad_log_density(std::span<const double> x) const;

  virtual bool has_reference_sampler() const { return false; }

  /// n i.i.d. draws from the normalized target.
  Matrix sample_reference(std::size_t n, Rng& rng) const;

 protected:
  virtual double eval(std::span<const double> x) const = 0;
  virtual void eval_grad(std::span<const double> x, std::span<double> out) const;
  virtual void draw(std::size_t n, Rng& rng, Matrix& out) const;
};

using TargetPtr = std::shared_ptr<const Target>;

/// Gaussian mixture target of arbitrary (usually 1 or 2) dimension.
class MixtureTarget : public Target {
 public:
  MixtureTarget(GaussianMixture mix, std::string name);
  std::size_t dim() const override { return mix_.dim(); }
  std::string name() const override { return name_; }
  bool has_gradient() const override { return true; }
  bool has_reference_sampler() const override { return true; }
  const GaussianMixture& mixture() const { return mix_; }

 protected:
  double eval(std::span<const double> x) const override;
  void eval_grad(std::span<const double> x, std::span<double> out) const override;
  void draw(std::size_t n, Rng& rng, Matrix& out) const override;

 private:
  GaussianMixture mix_;
  std::string name_;
};

/// Product of d/2 copies of a 2D base mixture over coordinate pairs
/// (x_{2j}, x_{2j+1}).
class TensorTarget : public Target {
 public:
  TensorTarget(GaussianMixture base, std::size_t d, std::string name);
  std::size_t dim() const override { return 2 * blocks_; }
  std::string name() const override { return name_; }
  bool has_gradient() const override { return true; }
  bool has_reference_sampler() const override { return true; }
  const GaussianMixture& base() const { return base_; }
  std::size_t blocks() const { return blocks_; }

 protected:
  double eval(std::span<const double> x) const override;
  void eval_grad(std::span<const double> x, std::span<double> out) const override;
  void draw(std::size_t n, Rng& rng, Matrix& out) const override;

 private:
  GaussianMixture base_;
  std::size_t blocks_;
  std::string name_;
};

/// Sign of the exponent in the moons factor (1 + exp(s * 4 x1 / a)).
enum class MoonsVariant { kAsPrinted, kSymmetric };

/// log pi(x) = log(1 + exp(s*4 x1/a)) - (|x|-1)^2/b - (x1-2)^2/(2a).
/// kAsPrinted uses s = +1; kSymmetric uses s = -1, which places equal mass on
/// two moons at x1 ~ +-1.3.
class DualMoonsTarget : public Target {
 public:
  DualMoonsTarget(double a, double b, MoonsVariant variant);
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "dual_moons"; }
  bool has_gradient() const override { return true; }
  bool has_reference_sampler() const override { return true; }
  MoonsVariant variant() const { return variant_; }

 protected:
  double eval(std::span<const double> x) const override;
  void eval_grad(std::span<const double> x, std::span<double> out) const override;
  void draw(std::size_t n, Rng& rng, Matrix& out) const override;

 private:
  double a_, b_;
  MoonsVariant variant_;
  double log_envelope_;
};

/// log pi(x) = -log|x| + log sum_{k in {1,4}} exp(-(|x|-k)^2 / (2 sigma^2)),
/// with |x| clamped below at 1e-8.
class TwoRingsTarget : public Target {
 public:
  explicit TwoRingsTarget(double sigma);
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "two_rings"; }
  bool has_gradient() const override { return true; }
  bool has_reference_sampler() const override { return true; }

 protected:
  double eval(std::span<const double> x) const override;
  void eval_grad(std::span<const double> x, std::span<double> out) const override;
  void draw(std::size_t n, Rng& rng, Matrix& out) const override;

 private:
  double sigma_;
  double log_envelope_;
};

/// Uniform box sampled by rejection against a grid-computed envelope.
struct RejectionBox {
  double lo, hi;
};

/// 1.1 * max of exp(log_density) over a 1000x1000 grid of the box, in log space.
double grid_log_envelope(const Target& t, RejectionBox box, std::size_t grid = 1000);

/// Rejection sampling from the uniform box. Throws ConfigError if the
/// acceptance rate drops below 1e-4 after at least 1e6 proposals.
void rejection_sample(const Target& t, RejectionBox box, double log_envelope, std::size_t n,
                      Rng& rng, Matrix& out);

/// Benchmark bases.
GaussianMixture gm2_base();
GaussianMixture gm4_base();
GaussianMixture gm25_base();

/// 0.5 N(0,1) + 0.5 N(10,1) in one dimension.
GaussianMixture bimodal_1d_base();

/// Odd or non-positive d throws InputError.
TargetPtr make_tensor_target(const GaussianMixture& base, std::size_t d, std::string name);

/// Parameter overrides for make_target: "d", "sigma", "a", "b", and
/// "moons_variant" (0 = as printed, 1 = symmetric).
using TargetParams = std::map<std::string, double>;

/// Registered ids: gm2, gm4, gm25 (tensorized, default d = 2), dual_moons,
/// two_rings, bimodal_1d, normal (standard normal, default d = 1).
TargetPtr make_target(const std::string& id, const TargetParams& params = {});

}  // namespace em2c
