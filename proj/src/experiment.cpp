#include "em2c/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

#include "em2c/errors.hpp"
#include "em2c/parallel.hpp"

namespace em2c {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// 0 keeps the printed sign of the dual-moons factor, 1 selects the symmetric form.
constexpr double kMoonsVariant = 1.0;

struct GmRow {
  double step;
  std::size_t n_k, t;
};

GmRow gm_kernel_row(const std::string& base, std::size_t d, KernelKind kind) {
  const bool rw = kind == KernelKind::kRandomWalk;
  if (base == "gm2") {
    if (rw) {
      if (d <= 4) return {6.0, 20, 25};
      return d == 10 ? GmRow{8.0, 20, 30} : GmRow{7.0, 20, 30};
    }
    return d <= 4 ? GmRow{2.3, 15, 25} : GmRow{2.3, 15, 30};
  }
  if (base == "gm4") {
    if (rw) return d <= 10 ? GmRow{4.5, 15, 25} : GmRow{5.0, 15, 25};
    return {2.0, 10, 25};
  }
  if (rw) {
    if (d <= 4) return {1.5, 10, 15};
    return d == 10 ? GmRow{2.0, 15, 20} : GmRow{2.5, 20, 25};
  }
  if (d <= 4) return {0.3, 10, 15};
  return d == 10 ? GmRow{0.3, 10, 20} : GmRow{0.35, 10, 25};
}

std::size_t gm_components(const std::string& base) {
  if (base == "gm2") return 2;
  if (base == "gm4") return 4;
  return 25;
}

ExperimentSpec gm_preset(const std::string& name, const std::string& base, std::size_t d,
                         KernelKind kind, const std::string& variant) {
  ExperimentSpec s;
  s.name = name;
  s.out_dir = "runs/" + name;
  s.target_id = base;
  s.target_params = {{"d", static_cast<double>(d)}};
  s.initial = {{30.0}, 1.0};
  s.n_repeats = 3;
  s.metrics.config.n_projections = 100;
  s.metrics.config.n_samples = 2000;
  const GmRow r = gm_kernel_row(base, d, kind);
  if (variant == "mcmc") {
    s.method = Method::kRw;
    s.rw.kernel = {kind, r.step, matched_chain_length(r.n_k, r.t)};
    s.rw.n_particles = 2000;
    return s;
  }
  s.method = Method::kEm2c;
  s.em2c.epsilon = 0.8;
  s.em2c.lambda = LambdaSchedule::constant(variant == "l05" ? 0.5 : variant == "l08" ? 0.8 : 1.0);
  s.em2c.n_particles = 2000;
  s.em2c.n_iterations = r.t;
  s.em2c.kernel = {kind, r.step, r.n_k};
  // Disperses the duplicated Y atoms left by resampling; see README.
  s.em2c.local_move = KernelSpec{KernelKind::kRandomWalk, 1.0, 10};
  s.em2c.projection.block_dim = 2;
  s.em2c.projection.em.k0 = gm_components(base);
  return s;
}

ExperimentSpec planar_preset(const std::string& name, bool moons, Method method) {
  ExperimentSpec s;
  s.name = name;
  s.out_dir = "runs/" + name;
  s.method = method;
  s.n_repeats = 3;
  if (moons) {
    s.target_id = "dual_moons";
    s.target_params = {{"a", 0.09}, {"b", 0.08}, {"moons_variant", kMoonsVariant}};
    s.initial = {{1.0, 1.0}, 0.04};
  } else {
    s.target_id = "two_rings";
    s.target_params = {{"sigma", 0.1}};
    s.initial = {{0.0, 0.0}, 0.04};
  }
  const double sigma = moons ? 1.0 : 0.9;
  s.metrics.config.n_projections = 100;
  s.metrics.config.n_samples = 10000;
  s.em2c.epsilon = 0.8;
  s.em2c.lambda = LambdaSchedule::constant(0.8);
  s.em2c.n_particles = 10000;
  s.em2c.n_iterations = 6;
  s.em2c.kernel = {KernelKind::kRandomWalk, sigma, 10};
  s.em2c.local_move = KernelSpec{KernelKind::kRandomWalk, 0.1, 5};
  s.em2c.projection.block_dim = 2;
  s.em2c.projection.em.k0 = 32;
  s.metrics.source = MetricSource::kReweighted;
  s.rw.kernel = {KernelKind::kRandomWalk, sigma, 1000};
  s.rw.n_particles = 10000;
  s.ais.n_temps = 40;
  s.ais.sigma = sigma;
  s.ais.n_steps = 1000;
  s.ais.n_particles = 10000;
  return s;
}

// Bimodal 1D target started from N(0, 1), two-component projection.
ExperimentSpec fig1_preset(const std::string& name, bool emd) {
  ExperimentSpec s;
  s.name = name;
  s.out_dir = "runs/" + name;
  s.target_id = "bimodal_1d";
  s.initial = {{0.0}, 1.0};
  s.n_repeats = 3;
  s.em2c.epsilon = 0.8;
  s.em2c.lambda = LambdaSchedule::constant(emd ? 1.0 : 0.8);
  s.em2c.n_particles = 5000;
  s.em2c.n_iterations = 15;
  s.em2c.kernel = {KernelKind::kRandomWalk, 4.0, 10};
  s.em2c.projection.block_dim = 1;
  s.em2c.projection.em.k0 = 2;
  s.metrics.config.n_samples = 5000;
  return s;
}

// ---- JSON helpers ----

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

json kernel_json(const KernelSpec& k) {
  return {{"kind", to_string(k.kind)}, {"step", k.step}, {"n_steps", k.n_steps}};
}

void read_kernel(const json& j, KernelSpec& k, const std::string& where) {
  check_keys(j, {"kind", "step", "n_steps"}, where);
  if (j.contains("kind")) k.kind = parse_kernel_kind(get<std::string>(j, "kind", where));
  if (j.contains("step")) k.step = get<double>(j, "step", where);
  if (j.contains("n_steps")) k.n_steps = get<std::size_t>(j, "n_steps", where);
}

std::string source_name(MetricSource s) { return s == MetricSource::kModel ? "model" : "reweighted"; }

void apply_json(ExperimentSpec& s, const json& j) {
  check_keys(j, {"preset", "name", "target", "method", "initial", "em2c", "rw", "ais", "metrics",
                 "repeats", "seed", "out", "timing", "dump_particles", "dump_model"},
             "spec");
  if (j.contains("name")) s.name = get<std::string>(j, "name", "spec");
  if (j.contains("target")) {
    const json& t = j.at("target");
    check_keys(t, {"id", "d", "sigma", "a", "b", "moons_variant"}, "target");
    if (t.contains("id")) {
      const auto id = get<std::string>(t, "id", "target");
      if (id != s.target_id) s.target_params.clear();
      s.target_id = id;
    }
    for (const auto& [k, v] : t.items()) {
      if (k != "id") s.target_params[k] = get<double>(t, k, "target");
    }
  }
  if (j.contains("method")) s.method = parse_method(get<std::string>(j, "method", "spec"));
  if (j.contains("initial")) {
    const json& i = j.at("initial");
    check_keys(i, {"mean", "variance"}, "initial");
    if (i.contains("mean")) {
      s.initial.mean = i.at("mean").is_array() ? get<std::vector<double>>(i, "mean", "initial")
                                               : std::vector<double>{get<double>(i, "mean", "initial")};
    }
    if (i.contains("variance")) s.initial.variance = get<double>(i, "variance", "initial");
  }
  if (j.contains("em2c")) {
    const json& e = j.at("em2c");
    check_keys(e, {"epsilon", "lambda", "n_particles", "n_iterations", "kernel", "local_move",
                   "projection", "resampling"},
               "em2c");
    auto& c = s.em2c;
    if (e.contains("epsilon")) c.epsilon = get<double>(e, "epsilon", "em2c");
    if (e.contains("lambda")) {
      c.lambda.values = e.at("lambda").is_array() ? get<std::vector<double>>(e, "lambda", "em2c")
                                                  : std::vector<double>{get<double>(e, "lambda", "em2c")};
    }
    if (e.contains("n_particles")) c.n_particles = get<std::size_t>(e, "n_particles", "em2c");
    if (e.contains("n_iterations")) c.n_iterations = get<std::size_t>(e, "n_iterations", "em2c");
    if (e.contains("kernel")) read_kernel(e.at("kernel"), c.kernel, "em2c.kernel");
    if (e.contains("local_move")) {
      if (e.at("local_move").is_null()) {
        c.local_move.reset();
      } else {
        KernelSpec k = c.local_move.value_or(KernelSpec{});
        read_kernel(e.at("local_move"), k, "em2c.local_move");
        c.local_move = k;
      }
    }
    if (e.contains("projection")) {
      const json& p = e.at("projection");
      const std::string w = "em2c.projection";
      check_keys(p, {"block_dim", "k0", "n_init", "max_iters", "cov_reg", "tol"}, w);
      if (p.contains("block_dim")) c.projection.block_dim = get<std::size_t>(p, "block_dim", w);
      if (p.contains("k0")) c.projection.em.k0 = get<std::size_t>(p, "k0", w);
      if (p.contains("n_init")) c.projection.em.n_init = get<std::size_t>(p, "n_init", w);
      if (p.contains("max_iters")) c.projection.em.max_iters = get<std::size_t>(p, "max_iters", w);
      if (p.contains("cov_reg")) c.projection.em.cov_reg = get<double>(p, "cov_reg", w);
      if (p.contains("tol")) c.projection.em.tol = get<double>(p, "tol", w);
    }
    if (e.contains("resampling")) {
      const auto r = get<std::string>(e, "resampling", "em2c");
      if (r == "multinomial") {
        c.resampling = Resampling::kMultinomial;
      } else if (r == "systematic") {
        c.resampling = Resampling::kSystematic;
      } else {
        throw ConfigError("em2c.resampling: expected multinomial or systematic");
      }
    }
  }
  if (j.contains("rw")) {
    const json& r = j.at("rw");
    check_keys(r, {"kernel", "n_particles"}, "rw");
    if (r.contains("kernel")) read_kernel(r.at("kernel"), s.rw.kernel, "rw.kernel");
    if (r.contains("n_particles")) s.rw.n_particles = get<std::size_t>(r, "n_particles", "rw");
  }
  if (j.contains("ais")) {
    const json& a = j.at("ais");
    check_keys(a, {"n_temps", "sigma", "n_steps", "n_particles"}, "ais");
    if (a.contains("n_temps")) s.ais.n_temps = get<std::size_t>(a, "n_temps", "ais");
    if (a.contains("sigma")) s.ais.sigma = get<double>(a, "sigma", "ais");
    if (a.contains("n_steps")) s.ais.n_steps = get<std::size_t>(a, "n_steps", "ais");
    if (a.contains("n_particles")) s.ais.n_particles = get<std::size_t>(a, "n_particles", "ais");
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    check_keys(m, {"n_projections", "n_samples", "seed", "u_statistic", "source", "every_iteration"},
               "metrics");
    auto& c = s.metrics.config;
    if (m.contains("n_projections")) c.n_projections = get<std::size_t>(m, "n_projections", "metrics");
    if (m.contains("n_samples")) c.n_samples = get<std::size_t>(m, "n_samples", "metrics");
    if (m.contains("seed")) c.seed = get<std::uint64_t>(m, "seed", "metrics");
    if (m.contains("u_statistic")) c.u_statistic = get<bool>(m, "u_statistic", "metrics");
    if (m.contains("every_iteration")) {
      s.metrics.every_iteration = get<bool>(m, "every_iteration", "metrics");
    }
    if (m.contains("source")) {
      const auto src = get<std::string>(m, "source", "metrics");
      if (src == "model") {
        s.metrics.source = MetricSource::kModel;
      } else if (src == "reweighted") {
        s.metrics.source = MetricSource::kReweighted;
      } else {
        throw ConfigError("metrics.source: expected model or reweighted");
      }
    }
  }
  if (j.contains("repeats")) s.n_repeats = get<std::size_t>(j, "repeats", "spec");
  if (j.contains("seed")) s.seed = get<std::uint64_t>(j, "seed", "spec");
  if (j.contains("out")) s.out_dir = get<std::string>(j, "out", "spec");
  if (j.contains("timing")) s.timing = get<bool>(j, "timing", "spec");
  if (j.contains("dump_particles")) s.dump_particles = get<bool>(j, "dump_particles", "spec");
  if (j.contains("dump_model")) s.dump_model = get<bool>(j, "dump_model", "spec");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void fill_metrics(IterationRecord& rec, const Matrix& samples, const Matrix& reference,
                  const MetricSpec& m) {
  rec.sw2 = sliced_wasserstein(samples, reference, m.config);
  rec.ed = energy_distance(samples, reference, m.config.u_statistic);
}

Matrix model_metric_samples(const ExperimentSpec& spec, const Target& target,
                            const TensorizedGmm& model, std::uint64_t seed, std::size_t t) {
  const std::size_t n = spec.metrics.config.n_samples;
  Rng rng = make_stream(seed, Stream::kMetric, t);
  Matrix x = model.sample(n, rng);
  if (spec.metrics.source == MetricSource::kModel) return x;
  const auto lw = compute_log_weights(target, model, x, 1.0);
  ParticleCloud cloud(std::move(x), Eigen::Map<const Vector>(lw.data(), static_cast<Eigen::Index>(lw.size())));
  Rng r2 = make_stream(seed, Stream::kMetric, t, 1);
  return weighted_resample(cloud, n, r2);
}

Matrix cloud_metric_samples(const ParticleCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.has_uniform_weights() && cloud.size() == n) return cloud.points;
  Rng rng = make_stream(seed, Stream::kMetric, 0, 1);
  return weighted_resample(cloud, n, rng);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kEm2c:
      return "em2c";
    case Method::kRw:
      return "rw";
    case Method::kAis:
      return "ais";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "em2c") return Method::kEm2c;
  if (s == "rw") return Method::kRw;
  if (s == "ais") return Method::kAis;
  throw ConfigError("unknown method '" + s + "' (expected em2c, rw or ais)");
}

void ExperimentSpec::validate() const {
  if (n_repeats < 1) throw ConfigError("repeats must be >= 1");
  if (initial.mean.empty()) throw ConfigError("initial.mean is empty");
  if (!(initial.variance > 0.0)) throw ConfigError("initial.variance must be positive");
  metrics.config.validate();
  switch (method) {
    case Method::kEm2c:
      em2c.validate();
      break;
    case Method::kRw:
      rw.kernel.validate();
      if (rw.n_particles < 1) throw ConfigError("rw.n_particles must be >= 1");
      break;
    case Method::kAis:
      ais.validate();
      break;
  }
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const char* base : {"gm2", "gm4", "gm25"}) {
    for (int d : {2, 4, 10, 20}) {
      for (const char* k : {"rw", "ula"}) {
        for (const char* v : {"l05", "l08", "l10", "mcmc"}) {
          out.push_back(std::string(base) + "-d" + std::to_string(d) + "-" + k + "-" + v);
        }
      }
    }
  }
  for (const char* t : {"moons", "rings"}) {
    for (const char* m : {"em2c", "rw", "ais"}) out.push_back(std::string(t) + "-" + m);
  }
  out.push_back("fig1-emd");
  out.push_back("fig1-em2c");
  return out;
}

ExperimentSpec preset(const std::string& name) {
  static const std::regex gm(R"((gm2|gm4|gm25)-d(2|4|10|20)-(rw|ula)-(l05|l08|l10|mcmc))");
  static const std::regex planar(R"((moons|rings)-(em2c|rw|ais))");
  std::smatch m;
  if (std::regex_match(name, m, gm)) {
    return gm_preset(name, m[1], std::stoul(m[2]), parse_kernel_kind(m[3]), m[4]);
  }
  if (std::regex_match(name, m, planar)) {
    return planar_preset(name, m[1] == "moons", parse_method(m[2]));
  }
  if (name == "fig1-emd" || name == "fig1-em2c") return fig1_preset(name, name == "fig1-emd");
  throw ConfigError("unknown preset '" + name + "'");
}

ExperimentSpec parse_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("spec: top level must be an object");
  ExperimentSpec s;
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw ConfigError("spec.preset: wrong type");
    s = preset(j.at("preset").get<std::string>());
  }
  apply_json(s, j);
  s.validate();
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

std::string spec_to_json(const ExperimentSpec& s) {
  json target = {{"id", s.target_id}};
  for (const auto& [k, v] : s.target_params) target[k] = v;
  json em2c = {{"epsilon", s.em2c.epsilon},
               {"lambda", s.em2c.lambda.values.size() == 1 ? json(s.em2c.lambda.values[0])
                                                           : json(s.em2c.lambda.values)},
               {"n_particles", s.em2c.n_particles},
               {"n_iterations", s.em2c.n_iterations},
               {"kernel", kernel_json(s.em2c.kernel)},
               {"local_move", s.em2c.local_move ? kernel_json(*s.em2c.local_move) : json(nullptr)},
               {"projection",
                {{"block_dim", s.em2c.projection.block_dim},
                 {"k0", s.em2c.projection.em.k0},
                 {"n_init", s.em2c.projection.em.n_init},
                 {"max_iters", s.em2c.projection.em.max_iters},
                 {"cov_reg", s.em2c.projection.em.cov_reg},
                 {"tol", s.em2c.projection.em.tol}}},
               {"resampling", s.em2c.resampling == Resampling::kMultinomial ? "multinomial" : "systematic"}};
  json j = {{"name", s.name},
            {"target", target},
            {"method", to_string(s.method)},
            {"initial", {{"mean", s.initial.mean}, {"variance", s.initial.variance}}},
            {"em2c", em2c},
            {"rw", {{"kernel", kernel_json(s.rw.kernel)}, {"n_particles", s.rw.n_particles}}},
            {"ais",
             {{"n_temps", s.ais.n_temps},
              {"sigma", s.ais.sigma},
              {"n_steps", s.ais.n_steps},
              {"n_particles", s.ais.n_particles}}},
            {"metrics",
             {{"n_projections", s.metrics.config.n_projections},
              {"n_samples", s.metrics.config.n_samples},
              {"seed", s.metrics.config.seed},
              {"u_statistic", s.metrics.config.u_statistic},
              {"source", source_name(s.metrics.source)},
              {"every_iteration", s.metrics.every_iteration}}},
            {"repeats", s.n_repeats},
            {"seed", s.seed},
            {"out", s.out_dir.string()},
            {"timing", s.timing},
            {"dump_particles", s.dump_particles},
            {"dump_model", s.dump_model}};
  return j.dump(2);
}

std::uint64_t kernel_budget(const ExperimentSpec& s) {
  switch (s.method) {
    case Method::kEm2c: {
      std::uint64_t per_iter = s.em2c.kernel.n_steps;
      if (s.em2c.local_move) per_iter += s.em2c.local_move->n_steps;
      return static_cast<std::uint64_t>(s.em2c.n_particles) * per_iter * s.em2c.n_iterations;
    }
    case Method::kRw:
      return static_cast<std::uint64_t>(s.rw.n_particles) * s.rw.kernel.n_steps;
    case Method::kAis:
      return static_cast<std::uint64_t>(s.ais.n_particles) * s.ais.n_temps * s.ais.n_steps;
  }
  return 0;
}

TensorizedGmm initial_model(const ExperimentSpec& spec, std::size_t dim) {
  const auto& m = spec.initial.mean;
  if (dim % m.size() != 0) throw ConfigError("initial.mean length does not divide the dimension");
  Eigen::VectorXd mean(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) mean[static_cast<Eigen::Index>(i)] = m[i % m.size()];
  const std::size_t block = spec.method == Method::kEm2c ? spec.em2c.projection.block_dim : 2;
  return TensorizedGmm::isotropic_gaussian(mean, spec.initial.variance,
                                           dim % block == 0 ? block : 1);
}

double RepeatResult::final_sw2() const { return records.empty() ? kNaN : records.back().sw2; }
double RepeatResult::final_ed() const { return records.empty() ? kNaN : records.back().ed; }

Matrix reference_samples(const ExperimentSpec& spec, const Target& target) {
  Rng rng = make_stream(spec.seed, Stream::kReference);
  return target.sample_reference(spec.metrics.config.n_samples, rng);
}

RepeatResult run_repeat(const ExperimentSpec& spec, const Target& target, const Matrix& reference,
                        std::size_t repeat) {
  RepeatResult out;
  out.repeat = repeat;
  out.seed = derive_seed(spec.seed, repeat);
  try {
    const TensorizedGmm initial = initial_model(spec, target.dim());
    if (spec.method == Method::kEm2c) {
      Em2cConfig cfg = spec.em2c;
      cfg.seed = out.seed;
      const std::size_t last = cfg.n_iterations;
      const auto observer = [&](std::size_t t, const TensorizedGmm& model, IterationRecord& rec) {
        if (!spec.timing) rec.wall_ms = 0.0;
        if (!spec.metrics.every_iteration && t != last) return;
        Matrix samples = model_metric_samples(spec, target, model, out.seed, t);
        fill_metrics(rec, samples, reference, spec.metrics);
        if (t == last) out.final_samples = std::move(samples);
      };
      Em2cTrace trace = run_em2c(cfg, target, initial, observer);
      out.records = std::move(trace.records);
      out.final_model = trace.final_proposal();
      out.stats = trace.kernel_stats;
      out.flagged = trace.kernel_stats.flagged;
      out.failure = trace.failure;
    } else {
      const std::size_t n = spec.method == Method::kRw ? spec.rw.n_particles : spec.ais.n_particles;
      IterationRecord rec;
      rec.lambda = kNaN;
      ParticleCloud cloud;
      if (spec.method == Method::kRw) {
        Rng rng = make_stream(out.seed, Stream::kInitial);
        const Matrix start = initial.sample(n, rng);
        cloud = ParticleCloud(run_mcmc_population(target, start, spec.rw.kernel, out.seed, &out.stats));
        out.flagged = out.stats.flagged;
        rec.iteration = spec.rw.kernel.n_steps;
      } else {
        AisConfig cfg = spec.ais;
        cfg.seed = out.seed;
        AisResult ais = run_ais(target, initial, cfg);
        cloud = std::move(ais.cloud);
        out.stats = ais.stats;
        out.flagged = ais.flagged;
        rec.iteration = cfg.n_temps;
      }
      rec.ess_x = cloud.ess();
      rec.flagged = out.flagged;
      out.final_samples = cloud_metric_samples(cloud, spec.metrics.config.n_samples, out.seed);
      fill_metrics(rec, out.final_samples, reference, spec.metrics);
      out.records.push_back(rec);
    }
  } catch (const Error& e) {
    out.failure = e.what();
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, bool write_files) {
  spec.validate();
  const TargetPtr target = make_target(spec.target_id, spec.target_params);
  const Matrix reference = reference_samples(spec, *target);
  ExperimentResult result;
  result.repeats.resize(spec.n_repeats);
  parallel_for(spec.n_repeats, [&](std::size_t r) {
    result.repeats[r] = run_repeat(spec, *target, reference, r);
  });

  std::vector<double> sw2, ed;
  for (const auto& r : result.repeats) {
    if (r.failure) {
      ++result.n_failed;
      continue;
    }
    sw2.push_back(r.final_sw2());
    ed.push_back(r.final_ed());
  }
  const auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = kNaN;
    sd = kNaN;
    if (v.empty()) return;
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    sd = 0.0;
    if (v.size() > 1) {
      for (double x : v) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
    }
  };
  mean_std(sw2, result.sw2_mean, result.sw2_std);
  mean_std(ed, result.ed_mean, result.ed_std);

  if (write_files) {
    std::filesystem::create_directories(spec.out_dir);
    for (const auto& r : result.repeats) {
      const auto dir = spec.out_dir / ("run_" + std::to_string(r.repeat));
      std::filesystem::create_directories(dir);
      std::ofstream trace(dir / "trace.csv", std::ios::trunc);
      write_trace_csv(trace, r.records, spec.timing);
      if (r.failure) {
        std::ofstream(dir / "failure.txt", std::ios::trunc) << *r.failure << "\n";
      }
      if (spec.dump_particles && r.final_samples.size() > 0) {
        write_particles(dir / "particles.bin", r.final_samples);
      }
      if (spec.dump_model && r.final_model) {
        std::ofstream model(dir / "model.txt", std::ios::trunc);
        write_model(model, *r.final_model);
      }
    }
    std::ofstream summary(spec.out_dir / "summary.csv", std::ios::trunc);
    write_summary_csv(summary, result);
  }
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& records, bool timing) {
  os << "iteration,ess_x,ess_y,sw2,ed,lambda,wall_ms\n";
  for (const auto& r : records) {
    os << r.iteration << ',' << fmt(r.ess_x) << ',' << fmt(r.ess_y) << ',' << fmt(r.sw2) << ','
       << fmt(r.ed) << ',' << fmt(r.lambda) << ',' << fmt(timing ? r.wall_ms : 0.0) << '\n';
  }
}

void write_summary_csv(std::ostream& os, const ExperimentResult& result) {
  os << "sw2_mean,sw2_std,ed_mean,ed_std,n_repeats,n_failed\n";
  os << fmt(result.sw2_mean) << ',' << fmt(result.sw2_std) << ',' << fmt(result.ed_mean) << ','
     << fmt(result.ed_std) << ',' << result.repeats.size() << ',' << result.n_failed << '\n';
}

}  // namespace em2c
