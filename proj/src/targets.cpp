#include "em2c/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "em2c/errors.hpp"

namespace em2c {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(1 + e^u) without overflow.
double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

double sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

double param_or(const TargetParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

}  // namespace

double Target::log_density(std::span<const double> x) const {
  if (x.size() != dim()) {
    throw InputError(name() + ": point has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(dim()));
  }
  return eval(x);
}

void Target::grad_log_density(std::span<const double> x, std::span<double> out) const {
  if (!has_gradient()) throw UnsupportedOperation(name() + ": no gradient available");
  if (x.size() != dim() || out.size() != dim()) {
    throw InputError(name() + ": gradient dimension mismatch");
  }
  eval_grad(x, out);
}

std::vector<double> Target::grad_log_density(std::span<const double> x) const {
  std::vector<double> g(dim());
  grad_log_density(x, g);
  return g;
}

Matrix Target::sample_reference(std::size_t n, Rng& rng) const {
  if (!has_reference_sampler()) throw UnsupportedOperation(name() + ": no reference sampler");
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim()));
  if (n > 0) draw(n, rng, out);
  return out;
}

void Target::eval_grad(std::span<const double>, std::span<double>) const {
  throw UnsupportedOperation(name() + ": no gradient available");
}

void Target::draw(std::size_t, Rng&, Matrix&) const {
  throw UnsupportedOperation(name() + ": no reference sampler");
}

// --- MixtureTarget ---------------------------------------------------------

MixtureTarget::MixtureTarget(GaussianMixture mix, std::string name)
    : mix_(std::move(mix)), name_(std::move(name)) {}

double MixtureTarget::eval(std::span<const double> x) const { return mix_.log_density(x); }

void MixtureTarget::eval_grad(std::span<const double> x, std::span<double> out) const {
  mix_.grad_log_density(x, out);
}

void MixtureTarget::draw(std::size_t n, Rng& rng, Matrix& out) const {
  for (std::size_t i = 0; i < n; ++i) mix_.sample(rng, row(out, static_cast<Eigen::Index>(i)));
}

// --- TensorTarget ----------------------------------------------------------

TensorTarget::TensorTarget(GaussianMixture base, std::size_t d, std::string name)
    : base_(std::move(base)), blocks_(d / 2), name_(std::move(name)) {
  if (base_.dim() != 2) throw InputError("tensor target: base must be two-dimensional");
  if (d < 2 || d % 2 != 0) throw InputError("tensor target: dimension must be even and >= 2");
}

double TensorTarget::eval(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < blocks_; ++j) s += base_.log_density(x.subspan(2 * j, 2));
  return s;
}

void TensorTarget::eval_grad(std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < blocks_; ++j) {
    base_.grad_log_density(x.subspan(2 * j, 2), out.subspan(2 * j, 2));
  }
}

void TensorTarget::draw(std::size_t n, Rng& rng, Matrix& out) const {
  for (std::size_t i = 0; i < n; ++i) {
    auto r = row(out, static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < blocks_; ++j) base_.sample(rng, r.subspan(2 * j, 2));
  }
}

// --- rejection sampling ----------------------------------------------------

double grid_log_envelope(const Target& t, RejectionBox box, std::size_t grid) {
  double best = kNegInf;
  const double h = (box.hi - box.lo) / static_cast<double>(grid - 1);
  double x[2];
  for (std::size_t i = 0; i < grid; ++i) {
    x[0] = box.lo + h * static_cast<double>(i);
    for (std::size_t j = 0; j < grid; ++j) {
      x[1] = box.lo + h * static_cast<double>(j);
      best = std::max(best, t.log_density(x));
    }
  }
  return best + std::log(1.1);
}

void rejection_sample(const Target& t, RejectionBox box, double log_envelope, std::size_t n,
                      Rng& rng, Matrix& out) {
  std::uniform_real_distribution<double> coord(box.lo, box.hi);
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::vector<double> x(t.dim());
  while (accepted < n) {
    for (auto& v : x) v = coord(rng);
    ++proposed;
    const double lp = t.log_density(x);
    if (lp > log_envelope) {
      throw ConfigError(t.name() + ": envelope violated at a proposal; grid envelope too tight");
    }
    if (std::log(uniform01(rng)) < lp - log_envelope) {
      std::copy(x.begin(), x.end(), row(out, static_cast<Eigen::Index>(accepted)).begin());
      ++accepted;
    }
    if (proposed >= 1000000 && static_cast<double>(accepted) < 1e-4 * static_cast<double>(proposed)) {
      throw ConfigError(t.name() + ": rejection acceptance rate below 1e-4 (envelope too loose)");
    }
  }
}

// --- DualMoonsTarget -------------------------------------------------------

DualMoonsTarget::DualMoonsTarget(double a, double b, MoonsVariant variant)
    : a_(a), b_(b), variant_(variant) {
  if (!(a > 0.0) || !(b > 0.0)) throw InputError("dual moons: a and b must be positive");
  log_envelope_ = grid_log_envelope(*this, {-3.0, 3.0});
}

double DualMoonsTarget::eval(std::span<const double> x) const {
  const double s = variant_ == MoonsVariant::kAsPrinted ? 1.0 : -1.0;
  const double r = std::hypot(x[0], x[1]);
  const double dr = r - 1.0;
  const double dx = x[0] - 2.0;
  return softplus(s * 4.0 * x[0] / a_) - dr * dr / b_ - dx * dx / (2.0 * a_);
}

void DualMoonsTarget::eval_grad(std::span<const double> x, std::span<double> out) const {
  const double r = std::hypot(x[0], x[1]);
  if (r == 0.0) throw DomainError("dual moons: gradient undefined at the origin");
  const double s = variant_ == MoonsVariant::kAsPrinted ? 1.0 : -1.0;
  const double radial = -2.0 * (r - 1.0) / b_ / r;
  out[0] = s * (4.0 / a_) * sigmoid(s * 4.0 * x[0] / a_) + radial * x[0] - (x[0] - 2.0) / a_;
  out[1] = radial * x[1];
}

void DualMoonsTarget::draw(std::size_t n, Rng& rng, Matrix& out) const {
  rejection_sample(*this, {-3.0, 3.0}, log_envelope_, n, rng, out);
}

// --- TwoRingsTarget --------------------------------------------------------

TwoRingsTarget::TwoRingsTarget(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0)) throw InputError("two rings: sigma must be positive");
  log_envelope_ = grid_log_envelope(*this, {-5.0, 5.0});
}

double TwoRingsTarget::eval(std::span<const double> x) const {
  const double r = std::max(std::hypot(x[0], x[1]), 1e-8);
  const double s2 = 2.0 * sigma_ * sigma_;
  const double e1 = -(r - 1.0) * (r - 1.0) / s2;
  const double e4 = -(r - 4.0) * (r - 4.0) / s2;
  const double m = std::max(e1, e4);
  return -std::log(r) + m + std::log(std::exp(e1 - m) + std::exp(e4 - m));
}

void TwoRingsTarget::eval_grad(std::span<const double> x, std::span<double> out) const {
  const double r = std::hypot(x[0], x[1]);
  if (r < 1e-8) throw DomainError("two rings: gradient undefined at the origin");
  const double s2 = sigma_ * sigma_;
  const double e1 = -(r - 1.0) * (r - 1.0) / (2.0 * s2);
  const double e4 = -(r - 4.0) * (r - 4.0) / (2.0 * s2);
  const double m = std::max(e1, e4);
  const double w1 = std::exp(e1 - m), w4 = std::exp(e4 - m);
  const double ddr = -1.0 / r + (w1 * (-(r - 1.0) / s2) + w4 * (-(r - 4.0) / s2)) / (w1 + w4);
  out[0] = ddr * x[0] / r;
  out[1] = ddr * x[1] / r;
}

void TwoRingsTarget::draw(std::size_t n, Rng& rng, Matrix& out) const {
  rejection_sample(*this, {-5.0, 5.0}, log_envelope_, n, rng, out);
}

// --- benchmark bases -------------------------------------------------------

GaussianMixture gm2_base() {
  return GaussianMixture({0.2, 0.8}, {vec2(0, 0), vec2(20, 20)},
                         {Eigen::MatrixXd::Identity(2, 2), mat2(10, -4, -4, 3)});
}

GaussianMixture gm4_base() {
  const Eigen::MatrixXd cov = mat2(3, 4, 4, 10);
  return GaussianMixture({0.25, 0.25, 0.25, 0.25},
                         {vec2(-10, 10), vec2(10, -10), vec2(15, 15), vec2(-15, -15)},
                         {cov, cov, cov, cov});
}

GaussianMixture gm25_base() {
  std::vector<double> w;
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::MatrixXd> c;
  for (int l = 0; l < 5; ++l) {
    for (int k = 0; k < 5; ++k) {
      w.push_back(1.0 / 25.0);
      m.push_back(vec2(5.0 * l, 5.0 * k));
      c.push_back(0.25 * Eigen::MatrixXd::Identity(2, 2));
    }
  }
  return GaussianMixture(std::move(w), std::move(m), std::move(c));
}

GaussianMixture bimodal_1d_base() {
  Eigen::VectorXd m0(1), m1(1);
  m0 << 0.0;
  m1 << 10.0;
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  return GaussianMixture({0.5, 0.5}, {m0, m1}, {one, one});
}

TargetPtr make_tensor_target(const GaussianMixture& base, std::size_t d, std::string name) {
  return std::make_shared<TensorTarget>(base, d, std::move(name));
}

TargetPtr make_target(const std::string& id, const TargetParams& params) {
  for (const auto& [key, value] : params) {
    if (key != "d" && key != "sigma" && key != "a" && key != "b" && key != "moons_variant") {
      throw InputError("unknown target parameter '" + key + "'");
    }
    if (!std::isfinite(value)) throw InputError("target parameter '" + key + "' is not finite");
  }
  const auto dim_param = [&](double fallback) {
    const double d = param_or(params, "d", fallback);
    if (d < 1 || d != std::floor(d)) throw InputError("target dimension must be a positive integer");
    return static_cast<std::size_t>(d);
  };
  if (id == "gm2") return make_tensor_target(gm2_base(), dim_param(2), "gm2");
  if (id == "gm4") return make_tensor_target(gm4_base(), dim_param(2), "gm4");
  if (id == "gm25") return make_tensor_target(gm25_base(), dim_param(2), "gm25");
  if (id == "dual_moons") {
    const double v = param_or(params, "moons_variant", 0.0);
    if (v != 0.0 && v != 1.0) throw InputError("moons_variant must be 0 or 1");
    return std::make_shared<DualMoonsTarget>(param_or(params, "a", 0.09), param_or(params, "b", 0.08),
                                             v == 0.0 ? MoonsVariant::kAsPrinted
                                                      : MoonsVariant::kSymmetric);
  }
  if (id == "two_rings") return std::make_shared<TwoRingsTarget>(param_or(params, "sigma", 0.1));
  if (id == "bimodal_1d") return std::make_shared<MixtureTarget>(bimodal_1d_base(), "bimodal_1d");
  if (id == "normal") {
    const std::size_t d = dim_param(1);
    return std::make_shared<MixtureTarget>(
        GaussianMixture::single(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)),
                                Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                          static_cast<Eigen::Index>(d))),
        "normal");
  }
  throw InputError("unknown target id '" + id + "'");
}

}  // namespace em2c
