// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "em2c/exact_grid.hpp"
#include "em2c/experiment.hpp"
#include "em2c/parallel.hpp"

using namespace em2c;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentResult run_preset(const std::string& name, Outcome& o) {
  ExperimentSpec s = preset(name);
  s.metrics.every_iteration = false;
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r = run_experiment(s, false);
  o.detail << name << ": sw2 [";
  for (std::size_t i = 0; i < r.repeats.size(); ++i) {
    o.detail << (i ? " " : "") << r.repeats[i].final_sw2();
  }
  o.detail << "] mean " << r.sw2_mean << " (" << static_cast<int>(seconds_since(t0)) << " s); ";
  o.require(r.n_failed == 0, name + " had failed repeats");
  return r;
}

// Mass of a 1D fitted mixture within w of c.
double mass_near(const TensorizedGmm& m, double c, double w) {
  const auto& b = m.block(0);
  double acc = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double mu = b.mean(k)[0], sd = std::sqrt(b.covariance(k)(0, 0));
    const auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0))); };
    acc += b.weights()[k] * (cdf(c + w) - cdf(c - w));
  }
  return acc;
}

Matrix normal_draws(std::size_t n, std::uint64_t seed) {
  Rng rng = make_stream(seed, Stream::kInitial);
  Matrix m(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = standard_normal(rng);
  return m;
}

Matrix gaussian_cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng = make_stream(seed, Stream::kReference);
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome exact_grid_contraction() {
  Outcome o;
  for (double eps : {0.2, 0.5, 0.8}) {
    const auto t0 = std::chrono::steady_clock::now();
    ContractionStudyConfig cfg;
    cfg.epsilon = eps;
    const auto study = run_contraction_study(cfg);
    const double secs = seconds_since(t0);
    const double kl0 = study.rows.front().kl;
    double worst = -1e300;
    for (const auto& r : study.rows) {
      worst = std::max(worst, r.kl - (std::pow(1 - eps, static_cast<double>(r.t)) * kl0 + 1e-6));
    }
    o.detail << "eps " << eps << ": KL0 " << kl0 << " KL20 " << study.rows.back().kl
             << " max excess " << worst << " (" << secs << " s); ";
    o.require(study.rows.size() == 21, "20 iterations");
    o.require(worst <= 0.0, "bound at eps " + std::to_string(eps));
    o.require(secs < 30.0, "runtime");
  }
  return o;
}

Outcome emd_failure() {
  Outcome o;
  ExperimentSpec emd = preset("fig1-emd"), mix = preset("fig1-em2c");
  emd.metrics.every_iteration = mix.metrics.every_iteration = false;
  const auto a = run_experiment(emd, false);
  const auto b = run_experiment(mix, false);
  o.require(a.n_failed == 0 && b.n_failed == 0, "no failed repeats");
  for (std::size_t r = 0; r < 3; ++r) {
    const double m_emd = a.repeats[r].final_model ? mass_near(*a.repeats[r].final_model, 10, 3) : 1.0;
    const double m_mix = b.repeats[r].final_model ? mass_near(*b.repeats[r].final_model, 10, 3) : 0.0;
    o.detail << "seed " << r << ": EMD mass " << m_emd << ", EM2C mass " << m_mix << "; ";
    o.require(m_emd < 0.01, "EMD mass < 1%");
    o.require(m_mix > 0.2, "EM2C mass > 20%");
  }
  return o;
}

Outcome gm4_table() {
  Outcome o;
  const auto l10 = run_preset("gm4-d10-ula-l10", o);
  const auto l08 = run_preset("gm4-d10-ula-l08", o);
  const auto l05 = run_preset("gm4-d10-ula-l05", o);
  o.require(l10.sw2_mean > 10.0, "lambda 1.0 > 10");
  o.require(l08.sw2_mean >= 0.3 && l08.sw2_mean <= 2.5, "lambda 0.8 in [0.3, 2.5]");
  o.require(l05.sw2_mean >= 0.3 && l05.sw2_mean <= 2.5, "lambda 0.5 in [0.3, 2.5]");
  return o;
}

Outcome gm25_table() {
  Outcome o;
  const auto l05 = run_preset("gm25-d4-ula-l05", o);
  const auto l10 = run_preset("gm25-d4-ula-l10", o);
  o.require(l05.sw2_mean < 1.5, "lambda 0.5 < 1.5");
  o.require(l10.sw2_mean > 8.0, "lambda 1.0 > 8");
  for (std::size_t r = 0; r < std::min(l05.repeats.size(), l10.repeats.size()); ++r) {
    o.require(l05.repeats[r].final_sw2() < l10.repeats[r].final_sw2(),
              "ordering in repeat " + std::to_string(r));
  }
  return o;
}

Outcome ula_bias() {
  Outcome o;
  const auto target = make_target("normal");
  double previous = -1.0;
  for (double gamma : {0.05, 0.1, 0.5}) {
    const auto out = apply_kernel({KernelKind::kUla, gamma, 500}, *target, normal_draws(100000, 5), 5,
                                  Stream::kKernel, 0);
    const double mu = out.points.col(0).mean();
    const double var = (out.points.col(0).array() - mu).square().sum() /
                       static_cast<double>(out.points.rows() - 1);
    const double expected = 2.0 / (2.0 - gamma);
    const double bias = std::abs(var - 1.0);
    o.detail << "gamma " << gamma << ": var " << var << " vs " << expected << "; ";
    o.require(std::abs(var / expected - 1.0) < 0.02, "variance within 2%");
    o.require(bias > previous, "bias monotone in gamma");
    previous = bias;
  }
  return o;
}

Outcome metric_correctness() {
  Outcome o;
  std::vector<double> a{-1.0, 0.5, 2.0, 7.0}, b(4);
  for (int i = 0; i < 4; ++i) b[i] = a[i] + 1.75;
  const double w = wasserstein_1d(a, b);
  o.detail << "w1d shift " << w << "; ";
  o.require(w == 1.75, "w1d shift exact");

  const Matrix c = gaussian_cloud(1000, 2, 1);
  Matrix d = c;
  const Eigen::RowVector2d v(3.0, -4.0);
  d.rowwise() += v;
  Rng rng = make_stream(1, Stream::kMetric);
  const double sw = sliced_wasserstein(c, d, 10000, rng);
  const double expected = v.norm() / std::sqrt(2.0);
  o.detail << "sw2 shift " << sw << " vs " << expected << "; ";
  o.require(std::abs(sw / expected - 1.0) < 0.02, "sw2 shift within 2%");

  const double self = energy_distance(c, c);
  o.detail << "ED(a,a) " << self << "; ";
  o.require(self == 0.0, "ED(a,a) exactly 0");

  const double null_ed = energy_distance(gaussian_cloud(10000, 2, 2), gaussian_cloud(10000, 2, 3));
  o.detail << "ED null " << null_ed << "; ";
  o.require(std::abs(null_ed) < 0.01, "ED null < 0.01");
  return o;
}

Outcome planar_benchmarks(ExperimentResult& moons_rw) {
  Outcome o;
  const auto moons = run_preset("moons-em2c", o);
  moons_rw = run_preset("moons-rw", o);
  const auto rings = run_preset("rings-em2c", o);
  const auto rings_rw = run_preset("rings-rw", o);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto tag = " seed " + std::to_string(r);
    o.require(moons.repeats[r].final_sw2() < 0.3, "moons < 0.3" + tag);
    o.require(rings.repeats[r].final_sw2() < 0.3, "rings < 0.3" + tag);
    o.require(moons.repeats[r].final_sw2() < moons_rw.repeats[r].final_sw2(), "moons < RW" + tag);
    o.require(rings.repeats[r].final_sw2() < rings_rw.repeats[r].final_sw2(), "rings < RW" + tag);
    const Matrix& z = rings.repeats[r].final_samples;
    std::size_t inner = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) inner += z.row(i).norm() < 2.5 ? 1 : 0;
    const double f = static_cast<double>(inner) / static_cast<double>(std::max<Eigen::Index>(z.rows(), 1));
    o.detail << "rings" << tag << ": inner " << f << " outer " << 1 - f << "; ";
    o.require(f > 0.1 && 1 - f > 0.1, "both rings > 10%" + tag);
  }
  return o;
}

Outcome baseline_parity(const ExperimentResult& moons_rw) {
  Outcome o;
  const auto ais = run_preset("moons-ais", o);
  o.detail << "moons-rw mean " << moons_rw.sw2_mean << "; ";
  o.require(ais.sw2_mean >= 0.05 && ais.sw2_mean <= 0.4, "AIS in [0.05, 0.4]");
  o.require(moons_rw.sw2_mean >= 0.4 && moons_rw.sw2_mean <= 0.9, "RW in [0.4, 0.9]");
  return o;
}

Outcome property_suites() {
  Outcome o;

  // EM ascent.
  {
    const auto t = make_target("gm25");
    Rng rng = make_stream(1, Stream::kReference);
    const Matrix z = t->sample_reference(5000, rng);
    std::size_t violations = 0;
    for (std::size_t k : {4u, 25u, 32u}) {
      EmFitConfig cfg;
      cfg.k0 = k;
      Rng fit_rng = make_stream(k, Stream::kProjection);
      const auto fit = em_fit(z, cfg, fit_rng);
      for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
        const bool reseed = std::count(fit.reseed_iterations.begin(), fit.reseed_iterations.end(), i);
        if (!reseed && fit.objective_trace[i] < fit.objective_trace[i - 1] - 1e-8) ++violations;
      }
    }
    o.detail << "EM decreases " << violations << "; ";
    o.require(violations == 0, "EM monotone");
  }

  // Tensor additivity and finite-difference gradients.
  {
    std::size_t mismatches = 0, grad_bad = 0;
    for (const char* id : {"gm2", "gm4", "gm25"}) {
      const auto t2 = make_target(id);
      const auto t10 = make_target(id, {{"d", 10}});
      Rng rng = make_stream(2, Stream::kMetric);
      for (int i = 0; i < 100; ++i) {
        std::vector<double> x(10);
        for (auto& v : x) v = 15 * standard_normal(rng);
        double sum = 0.0;
        for (std::size_t j = 0; j < 5; ++j) sum += t2->log_density(std::span<const double>(x).subspan(2 * j, 2));
        mismatches += t10->log_density(x) == sum ? 0 : 1;
      }
    }
    const std::vector<TargetPtr> targets{make_target("gm2", {{"d", 4}}), make_target("gm4", {{"d", 4}}),
                                         make_target("gm25", {{"d", 4}}), make_target("dual_moons"),
                                         make_target("dual_moons", {{"moons_variant", 1}}),
                                         make_target("two_rings")};
    for (const auto& t : targets) {
      Rng rng = make_stream(3, Stream::kReference);
      const Matrix pts = t->sample_reference(100, rng);
      for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        std::vector<double> x(row(pts, i).begin(), row(pts, i).end());
        const auto g = t->grad_log_density(x);
        for (std::size_t k = 0; k < x.size(); ++k) {
          auto xp = x, xm = x;
          xp[k] += 1e-5;
          xm[k] -= 1e-5;
          const double fd = (t->log_density(xp) - t->log_density(xm)) / 2e-5;
          const double scale = std::max({std::abs(fd), std::abs(g[k]), 1e-2});
          grad_bad += std::abs(fd - g[k]) / scale < 1e-4 ? 0 : 1;
        }
      }
    }
    o.detail << "additivity mismatches " << mismatches << ", gradient mismatches " << grad_bad << "; ";
    o.require(mismatches == 0, "tensor additivity");
    o.require(grad_bad == 0, "gradient agreement");
  }

  // Affine invariance of the weights.
  {
    class Shifted : public Target {
     public:
      Shifted(TargetPtr b, double c) : b_(std::move(b)), c_(c) {}
      std::size_t dim() const override { return b_->dim(); }
      std::string name() const override { return "shifted"; }

     protected:
      double eval(std::span<const double> x) const override { return b_->log_density(x) + c_; }

     private:
      TargetPtr b_;
      double c_;
    };
    const auto base = make_target("gm4", {{"d", 10}});
    const auto proposal = TensorizedGmm::isotropic_gaussian(Eigen::VectorXd::Zero(10), 100.0, 2);
    Rng rng = make_stream(4, Stream::kProposal);
    const Matrix x = proposal.sample(2000, rng), y = proposal.sample(2000, rng);
    const auto indices = [&](const Target& t) {
      const auto wx = compute_log_weights(t, proposal, x, 0.8);
      const auto wy = compute_log_weights(t, proposal, y, 0.8);
      const auto mix = build_empirical_mixture(ParticleCloud(x, Eigen::Map<const Vector>(wx.data(), 2000)),
                                               ParticleCloud(y, Eigen::Map<const Vector>(wy.data(), 2000)),
                                               0.8);
      Rng r = make_stream(4, Stream::kResample);
      return resample(mix, 2000, r).source;
    };
    const auto ref = indices(*base);
    bool same = true;
    for (double c : {-50.0, 3.0, 40.0}) same = same && indices(Shifted(base, c)) == ref;
    o.detail << "affine invariance " << (same ? "ok" : "broken") << "; ";
    o.require(same, "same resample indices");
  }

  // Determinism across thread counts.
  {
    std::vector<ExperimentSpec> specs;
    auto em = preset("gm4-d10-ula-l08");
    em.em2c.n_particles = 500;
    em.em2c.n_iterations = 5;
    em.metrics.config.n_samples = 500;
    specs.push_back(em);
    auto rw = preset("moons-rw");
    rw.rw.n_particles = 500;
    rw.rw.kernel.n_steps = 50;
    rw.metrics.config.n_samples = 500;
    specs.push_back(rw);
    auto ais = preset("rings-ais");
    ais.ais.n_particles = 300;
    ais.ais.n_steps = 5;
    ais.metrics.config.n_samples = 300;
    specs.push_back(ais);
    bool identical = true;
    for (auto& s : specs) {
      s.n_repeats = 2;
      s.seed = 17;
      std::string reference;
      for (unsigned threads : {1u, 2u, 8u}) {
        set_num_threads(threads);
        s.out_dir = fs::temp_directory_path() / ("em2c_acceptance_" + s.name + std::to_string(threads));
        fs::remove_all(s.out_dir);
        run_experiment(s, true);
        std::string bytes = slurp(s.out_dir / "summary.csv");
        for (std::size_t r = 0; r < s.n_repeats; ++r) {
          bytes += slurp(s.out_dir / ("run_" + std::to_string(r)) / "trace.csv");
        }
        fs::remove_all(s.out_dir);
        if (reference.empty()) reference = bytes;
        identical = identical && bytes == reference && !bytes.empty();
      }
    }
    set_num_threads(0);
    o.detail << "CSV determinism across 1/2/8 threads " << (identical ? "ok" : "broken") << "; ";
    o.require(identical, "bitwise-identical CSVs");
  }
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << title << " ("
              << static_cast<int>(seconds_since(t0)) << " s): " << o.detail.str() << std::endl;
  };

  ExperimentResult moons_rw;
  report(1, "exact-grid contraction", exact_grid_contraction);
  report(2, "EMD mode collapse vs EM2C", emd_failure);
  report(3, "GM4 d=10 ULA", gm4_table);
  report(4, "GM25 d=4 ULA", gm25_table);
  report(5, "ULA stationary bias", ula_bias);
  report(6, "metric correctness", metric_correctness);
  report(7, "2D benchmarks", [&] { return planar_benchmarks(moons_rw); });
  report(8, "baseline parity", [&] { return baseline_parity(moons_rw); });
  report(9, "property suites", property_suites);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
