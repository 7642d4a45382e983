#include "em2c/projection.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "em2c/errors.hpp"
#include "em2c/parallel.hpp"

namespace em2c {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

Eigen::VectorXd column_std(const Matrix& samples) {
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  Eigen::VectorXd sd(samples.cols());
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    sd[c] = std::sqrt((samples.col(c).array() - mean[c]).square().mean());
  }
  return sd;
}

Eigen::MatrixXd data_covariance(const Matrix& samples) {
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Matrix centered = samples.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(samples.rows());
}

struct MStepOutput {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<std::size_t> empty;
};

// Closed-form weighted updates from responsibilities (row-major N x K).
MStepOutput m_step(const Matrix& z, const std::vector<double>& resp, std::size_t K, double reg) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  const std::size_t b = static_cast<std::size_t>(z.cols());
  MStepOutput out;
  out.weights.assign(K, 0.0);
  out.means.assign(K, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b)));
  out.covs.assign(K, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)));
  std::vector<double> nk(K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = row(z, static_cast<Eigen::Index>(i));
    for (std::size_t k = 0; k < K; ++k) {
      const double r = resp[i * K + k];
      if (r == 0.0) continue;
      nk[k] += r;
      for (std::size_t a = 0; a < b; ++a) out.means[k][static_cast<Eigen::Index>(a)] += r * zi[a];
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (nk[k] < 1e-8 * static_cast<double>(n)) {
      out.empty.push_back(k);
      continue;
    }
    out.means[k] /= nk[k];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = row(z, static_cast<Eigen::Index>(i));
    for (std::size_t k = 0; k < K; ++k) {
      const double r = resp[i * K + k];
      if (r == 0.0 || nk[k] < 1e-8 * static_cast<double>(n)) continue;
      for (std::size_t a = 0; a < b; ++a) {
        const double da = zi[a] - out.means[k][static_cast<Eigen::Index>(a)];
        for (std::size_t c = 0; c <= a; ++c) {
          const double dc = zi[c] - out.means[k][static_cast<Eigen::Index>(c)];
          out.covs[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) += r * da * dc;
        }
      }
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    out.weights[k] = nk[k] / static_cast<double>(n);
    if (nk[k] < 1e-8 * static_cast<double>(n)) continue;
    auto& S = out.covs[k];
    S /= nk[k];
    for (Eigen::Index a = 0; a < S.rows(); ++a) {
      for (Eigen::Index c = 0; c < a; ++c) S(c, a) = S(a, c);
      S(a, a) += reg;
    }
  }
  return out;
}

struct RestartResult {
  GaussianMixture model;
  double objective = kNegInf;
  std::vector<double> trace;
  std::vector<std::size_t> reseeds;
  std::size_t iterations = 0;
  bool converged = false;
};

RestartResult run_restart(const Matrix& z, const EmFitConfig& cfg, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  const std::size_t K = cfg.k0;
  const Eigen::MatrixXd pooled_cov =
      data_covariance(z) +
      cfg.cov_reg * Eigen::MatrixXd::Identity(z.cols(), z.cols());

  // Hard assignment to the nearest k-means++ center.
  const Matrix centers = kmeanspp_init(z, K, rng);
  std::vector<double> resp(n * K, 0.0);
  std::vector<double> nearest_d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto zi = row(z, static_cast<Eigen::Index>(i));
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const double dist = squared_distance(zi, row(centers, static_cast<Eigen::Index>(k)));
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    resp[i * K + best] = 1.0;
    nearest_d2[i] = best_d;
  }

  RestartResult result;
  std::vector<double> lj(K), pen(K);
  bool have_model = false;
  bool reseeded_last = false;
  for (std::size_t it = 0;; ++it) {
    MStepOutput ms = m_step(z, resp, K, cfg.cov_reg);
    reseeded_last = !ms.empty.empty();
    std::vector<double> sample_logp;
    if (reseeded_last) {
      // Empty components restart at the lowest-density samples of the current
      // model; before the first E-step, the samples farthest from their center.
      sample_logp.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        sample_logp[i] = have_model
                             ? result.model.log_density(row(z, static_cast<Eigen::Index>(i)))
                             : -nearest_d2[i];
      }
    }
    for (std::size_t k : ms.empty) {
      const auto worst = static_cast<Eigen::Index>(
          std::min_element(sample_logp.begin(), sample_logp.end()) - sample_logp.begin());
      ms.means[k] = z.row(worst).transpose();
      ms.covs[k] = pooled_cov;
      ms.weights[k] = 1.0 / static_cast<double>(n);
      sample_logp[static_cast<std::size_t>(worst)] = std::numeric_limits<double>::infinity();
    }
    double wsum = 0.0;
    for (double w : ms.weights) wsum += w;
    for (double& w : ms.weights) w /= wsum;

    GaussianMixture model(ms.weights, ms.means, ms.covs);
    for (std::size_t k = 0; k < K; ++k) {
      pen[k] = std::log(model.weights()[k]) - 0.5 * cfg.cov_reg * model.trace_precision(k);
    }

    // E-step on the regularized component densities.
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto zi = row(z, static_cast<Eigen::Index>(i));
      double top = kNegInf;
      for (std::size_t k = 0; k < K; ++k) {
        lj[k] = pen[k] + model.log_component(k, zi);
        top = std::max(top, lj[k]);
      }
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += std::exp(lj[k] - top);
      const double lse = top + std::log(s);
      total += lse;
      for (std::size_t k = 0; k < K; ++k) resp[i * K + k] = std::exp(lj[k] - lse);
    }
    const double objective = total / static_cast<double>(n);
    if (!std::isfinite(objective)) {
      result.objective = objective;
      return result;
    }
    if (reseeded_last) result.reseeds.push_back(result.trace.size());
    result.trace.push_back(objective);
    result.model = std::move(model);
    have_model = true;
    result.objective = objective;
    result.iterations = it + 1;
    if (it > 0 && !reseeded_last) {
      const double prev = result.trace[result.trace.size() - 2];
      if (std::abs(objective - prev) <= cfg.tol * std::max(1.0, std::abs(prev))) {
        result.converged = true;
        break;
      }
    }
    if (it + 1 >= cfg.max_iters) break;
  }
  return result;
}

}  // namespace

// --- TensorizedGmm ---------------------------------------------------------

TensorizedGmm::TensorizedGmm(std::size_t block_dim, std::vector<GaussianMixture> blocks)
    : block_dim_(block_dim), blocks_(std::move(blocks)) {
  if (block_dim_ == 0 || blocks_.empty()) throw ModelError("tensorized gmm: empty model");
  for (const auto& b : blocks_) {
    if (b.dim() != block_dim_) throw ModelError("tensorized gmm: block dimension mismatch");
  }
}

TensorizedGmm TensorizedGmm::isotropic_gaussian(const Eigen::VectorXd& mean, double variance,
                                                std::size_t block_dim) {
  const auto d = static_cast<std::size_t>(mean.size());
  if (block_dim == 0 || d % block_dim != 0) {
    throw InputError("isotropic_gaussian: dimension is not a multiple of block_dim");
  }
  if (!(variance > 0.0)) throw InputError("isotropic_gaussian: variance must be positive");
  std::vector<GaussianMixture> blocks;
  const auto b = static_cast<Eigen::Index>(block_dim);
  for (std::size_t j = 0; j < d / block_dim; ++j) {
    blocks.push_back(GaussianMixture::single(mean.segment(static_cast<Eigen::Index>(j) * b, b),
                                             variance * Eigen::MatrixXd::Identity(b, b)));
  }
  return TensorizedGmm(block_dim, std::move(blocks));
}

double TensorizedGmm::log_density(std::span<const double> x) const {
  if (x.size() != dim()) throw InputError("tensorized gmm: point dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    s += blocks_[j].log_density(x.subspan(j * block_dim_, block_dim_));
  }
  return s;
}

Matrix TensorizedGmm::sample(std::size_t n, Rng& rng) const {
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = row(out, static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
      blocks_[j].sample(rng, r.subspan(j * block_dim_, block_dim_));
    }
  }
  return out;
}

// --- EM --------------------------------------------------------------------

void EmFitConfig::validate() const {
  if (k0 < 1) throw ConfigError("projection k0 must be >= 1");
  if (n_init < 1) throw ConfigError("projection n_init must be >= 1");
  if (max_iters < 1) throw ConfigError("projection max_iters must be >= 1");
  if (!(cov_reg > 0.0)) throw ConfigError("projection cov_reg must be positive");
  if (!(tol > 0.0)) throw ConfigError("projection tol must be positive");
}

Matrix kmeanspp_init(const Matrix& samples, std::size_t k, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(samples.rows());
  if (k == 0 || n == 0) throw InputError("kmeans++: need k >= 1 and at least one sample");
  Matrix centers(static_cast<Eigen::Index>(k), samples.cols());
  const Eigen::VectorXd jitter_scale = 1e-6 * column_std(samples);

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.row(0) = samples.row(static_cast<Eigen::Index>(pick(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(row(samples, static_cast<Eigen::Index>(i)), row(centers, 0));
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] == 0.0 && chosen > 0) --chosen;
      centers.row(static_cast<Eigen::Index>(c)) = samples.row(static_cast<Eigen::Index>(chosen));
    } else {
      // Fewer distinct points than centers: jitter a duplicate.
      chosen = pick(rng);
      for (Eigen::Index a = 0; a < samples.cols(); ++a) {
        centers(static_cast<Eigen::Index>(c), a) =
            samples(static_cast<Eigen::Index>(chosen), a) + jitter_scale[a] * standard_normal(rng);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(row(samples, static_cast<Eigen::Index>(i)),
                                               row(centers, static_cast<Eigen::Index>(c))));
    }
  }
  return centers;
}

EmFitResult em_fit(const Matrix& samples, const EmFitConfig& cfg, Rng& rng) {
  cfg.validate();
  if (static_cast<std::size_t>(samples.rows()) < 2 * cfg.k0) {
    throw ProjectionError("em_fit: need at least 2*k0 samples (" + std::to_string(samples.rows()) +
                          " < " + std::to_string(2 * cfg.k0) + ")");
  }
  if (!samples.allFinite()) throw ProjectionError("em_fit: non-finite samples");

  EmFitResult best;
  best.objective = kNegInf;
  bool have = false;
  std::size_t failed = 0;
  for (std::size_t r = 0; r < cfg.n_init; ++r) {
    RestartResult res;
    try {
      res = run_restart(samples, cfg, rng);
    } catch (const ModelError&) {
      ++failed;
      continue;
    }
    if (!std::isfinite(res.objective) || res.trace.empty()) {
      ++failed;
      continue;
    }
    if (!have || res.objective > best.objective) {
      best.model = std::move(res.model);
      best.objective = res.objective;
      best.objective_trace = std::move(res.trace);
      best.reseed_iterations = std::move(res.reseeds);
      best.iterations = res.iterations;
      best.converged = res.converged;
      have = true;
    }
  }
  if (!have) throw ProjectionError("em_fit: all " + std::to_string(cfg.n_init) + " restarts failed");
  best.failed_restarts = failed;
  return best;
}

TensorFitResult fit_tensorized(const Matrix& points, std::size_t block_dim, const EmFitConfig& cfg,
                               std::uint64_t seed, std::uint64_t iteration) {
  const auto d = static_cast<std::size_t>(points.cols());
  if (block_dim == 0 || d % block_dim != 0) {
    throw InputError("fit_tensorized: dimension " + std::to_string(d) +
                     " is not a multiple of the block width");
  }
  const std::size_t n_blocks = d / block_dim;
  std::vector<EmFitResult> fits(n_blocks);
  std::vector<std::string> errors(n_blocks);
  parallel_for(n_blocks, [&](std::size_t j) {
    Rng rng = make_stream(seed, Stream::kProjection, iteration, j);
    const Matrix block = points.middleCols(static_cast<Eigen::Index>(j * block_dim),
                                           static_cast<Eigen::Index>(block_dim));
    try {
      fits[j] = em_fit(block, cfg, rng);
    } catch (const Error& e) {
      errors[j] = e.what();
    }
  });
  std::string message;
  for (std::size_t j = 0; j < n_blocks; ++j) {
    if (!errors[j].empty()) message += "block " + std::to_string(j) + ": " + errors[j] + "; ";
  }
  if (!message.empty()) throw ProjectionError("fit_tensorized: " + message);

  std::vector<GaussianMixture> blocks;
  blocks.reserve(n_blocks);
  for (const auto& f : fits) blocks.push_back(f.model);
  return {TensorizedGmm(block_dim, std::move(blocks)), std::move(fits)};
}

// --- serialization ---------------------------------------------------------

void write_model(std::ostream& os, const TensorizedGmm& model) {
  const auto old_precision = os.precision(17);
  os << "tgmm 1\n";
  os << "dim " << model.dim() << " block_dim " << model.block_dim() << " blocks " << model.n_blocks()
     << "\n";
  for (std::size_t j = 0; j < model.n_blocks(); ++j) {
    const auto& b = model.block(j);
    os << "block " << j << " components " << b.size() << "\n";
    for (std::size_t k = 0; k < b.size(); ++k) {
      os << b.weights()[k];
      for (Eigen::Index a = 0; a < b.mean(k).size(); ++a) os << ' ' << b.mean(k)[a];
      const auto& S = b.covariance(k);
      for (Eigen::Index r = 0; r < S.rows(); ++r) {
        for (Eigen::Index c = 0; c < S.cols(); ++c) os << ' ' << S(r, c);
      }
      os << "\n";
    }
  }
  os.precision(old_precision);
}

TensorizedGmm read_model(std::istream& is) {
  const auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) {
      throw InputError("model file: expected '" + word + "', found '" + tok + "'");
    }
  };
  expect("tgmm");
  int version = 0;
  if (!(is >> version) || version != 1) throw InputError("model file: unsupported version");
  std::size_t d = 0, b = 0, n_blocks = 0;
  expect("dim");
  is >> d;
  expect("block_dim");
  is >> b;
  expect("blocks");
  is >> n_blocks;
  if (!is || b == 0 || n_blocks * b != d) throw InputError("model file: inconsistent header");
  std::vector<GaussianMixture> blocks;
  for (std::size_t j = 0; j < n_blocks; ++j) {
    std::size_t idx = 0, K = 0;
    expect("block");
    is >> idx;
    expect("components");
    is >> K;
    if (!is || idx != j || K == 0) throw InputError("model file: bad block header");
    std::vector<double> w(K);
    std::vector<Eigen::VectorXd> m(K, Eigen::VectorXd(static_cast<Eigen::Index>(b)));
    std::vector<Eigen::MatrixXd> S(K, Eigen::MatrixXd(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b)));
    for (std::size_t k = 0; k < K; ++k) {
      is >> w[k];
      for (std::size_t a = 0; a < b; ++a) is >> m[k][static_cast<Eigen::Index>(a)];
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t c = 0; c < b; ++c) is >> S[k](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
    if (!is) throw InputError("model file: truncated component list");
    blocks.emplace_back(std::move(w), std::move(m), std::move(S));
  }
  return TensorizedGmm(b, std::move(blocks));
}

}  // namespace em2c
