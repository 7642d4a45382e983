#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "em2c/baselines.hpp"
#include "em2c/metrics.hpp"
#include "em2c/mirror.hpp"
#include "em2c/targets.hpp"

namespace em2c {

enum class Method { kEm2c, kRw, kAis };

std::string to_string(Method m);
Method parse_method(const std::string& s);

/// Which samples stand in for the proposal when computing metrics.
enum class MetricSource {
  kModel,       // draws from the fitted model
  kReweighted,  // model draws resampled with weights pi / model
};

/// Gaussian start N(mean, variance I). A mean shorter than the target
/// dimension is tiled across coordinates.
struct InitialSpec {
  std::vector<double> mean{0.0};
  double variance = 1.0;
};

struct RwSpec {
  KernelSpec kernel{KernelKind::kRandomWalk, 1.0, 1000};  // n_steps = chain length
  std::size_t n_particles = 1000;
};

struct MetricSpec {
  MetricConfig config;
  MetricSource source = MetricSource::kModel;
  bool every_iteration = true;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::string target_id = "gm4";
  TargetParams target_params;
  Method method = Method::kEm2c;
  InitialSpec initial;
  Em2cConfig em2c;
  RwSpec rw;
  AisConfig ais;
  MetricSpec metrics;
  std::size_t n_repeats = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";
  bool timing = false;  // write wall_ms; off keeps traces byte-identical
  bool dump_particles = false;
  bool dump_model = false;

  /// Throws ConfigError on any invariant violation.
  void validate() const;
};

/// Names like "gm4-d10-ula-l08", "gm25-d4-rw-mcmc", "moons-em2c", "rings-ais".
ExperimentSpec preset(const std::string& name);
std::vector<std::string> preset_names();

/// A JSON object: an optional "preset" key selects the base spec, every other
/// key overrides it. Unknown keys throw ConfigError; syntax errors report line
/// and column.
ExperimentSpec parse_spec(const std::string& text);
ExperimentSpec load_spec(const std::filesystem::path& path);
std::string spec_to_json(const ExperimentSpec& spec);

/// Kernel applications of one repeat (main kernel plus local moves).
std::uint64_t kernel_budget(const ExperimentSpec& spec);

TensorizedGmm initial_model(const ExperimentSpec& spec, std::size_t dim);

struct RepeatResult {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> records;
  /// Samples used for the final metric evaluation.
  Matrix final_samples;
  std::optional<TensorizedGmm> final_model;
  KernelStats stats;
  std::size_t flagged = 0;
  std::optional<std::string> failure;

  double final_sw2() const;
  double final_ed() const;
};

struct ExperimentResult {
  std::vector<RepeatResult> repeats;
  double sw2_mean = 0.0, sw2_std = 0.0, ed_mean = 0.0, ed_std = 0.0;
  std::size_t n_failed = 0;
};

/// Frozen reference draws for the experiment (stream (seed, kReference)).
Matrix reference_samples(const ExperimentSpec& spec, const Target& target);

/// One repeat with seed derive_seed(spec.seed, repeat). Errors are caught and
/// recorded in failure.
RepeatResult run_repeat(const ExperimentSpec& spec, const Target& target, const Matrix& reference,
                        std::size_t repeat);

/// All repeats, then mean and sample standard deviation of final metrics over
/// the successful ones. With write_files, writes run_<r>/trace.csv per repeat
/// and summary.csv under spec.out_dir.
ExperimentResult run_experiment(const ExperimentSpec& spec, bool write_files = true);

/// Header: iteration,ess_x,ess_y,sw2,ed,lambda,wall_ms
void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& records, bool timing);
void write_summary_csv(std::ostream& os, const ExperimentResult& result);

}  // namespace em2c
