#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "em2c/errors.hpp"
#include "em2c/exact_grid.hpp"
#include "em2c/experiment.hpp"
#include "em2c/parallel.hpp"

namespace {

using namespace em2c;

void print_budget(const ExperimentSpec& spec) {
  std::cout << spec_to_json(spec) << "\n";
  std::cout << "kernel_applications_per_repeat " << kernel_budget(spec) << "\n";
  std::cout << "kernel_applications_total " << kernel_budget(spec) * spec.n_repeats << "\n";
}

int execute(const ExperimentSpec& spec, bool dry_run) {
  if (dry_run) {
    print_budget(spec);
    return 0;
  }
  const ExperimentResult res = run_experiment(spec, true);
  for (const auto& r : res.repeats) {
    std::cout << "repeat " << r.repeat << ": ";
    if (r.failure) {
      std::cout << "FAILED " << *r.failure << "\n";
    } else {
      std::cout << "sw2 " << r.final_sw2() << " ed " << r.final_ed() << "\n";
    }
  }
  std::cout << "sw2 " << res.sw2_mean << " +- " << res.sw2_std << "  ed " << res.ed_mean << " +- "
            << res.ed_std << "\n";
  std::cout << "wrote " << (spec.out_dir / "summary.csv").string() << "\n";
  return res.n_failed == 0 ? 0 : 1;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeats;
  std::optional<std::string> out;
  bool dry_run = false;
  bool timing = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--repeats", o.repeats, "Number of independent repeats");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--dry-run", o.dry_run, "Print the resolved spec and kernel budget only");
  cmd->add_flag("--timing", o.timing, "Record wall_ms in traces");
}

void apply(ExperimentSpec& s, const Overrides& o) {
  if (o.seed) s.seed = *o.seed;
  if (o.repeats) s.n_repeats = *o.repeats;
  if (o.out) s.out_dir = *o.out;
  if (o.timing) s.timing = true;
  s.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic mirror Monte Carlo sampler"};
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  Overrides run_o;
  std::string spec_file, preset_name;
  bool list = false;
  auto* run = app.add_subcommand("run", "Run an experiment from a spec file or preset");
  run->add_option("spec", spec_file, "JSON spec file");
  run->add_option("--preset", preset_name, "Built-in preset name");
  run->add_flag("--list-presets", list, "List preset names");
  add_common(run, run_o);

  Overrides base_o;
  std::string base_target = "moons";
  std::size_t base_particles = 0;
  auto* baseline = app.add_subcommand("baseline", "Run a baseline sampler");
  baseline->require_subcommand(1);
  auto* brw = baseline->add_subcommand("rw", "Population of random-walk chains");
  auto* bais = baseline->add_subcommand("ais", "Annealed importance sampling");
  std::optional<double> rw_sigma, ais_sigma;
  std::optional<std::size_t> rw_iter, ais_iter, ais_temps;
  for (auto* c : {brw, bais}) {
    c->add_option("--target", base_target, "moons or rings")->check(CLI::IsMember({"moons", "rings"}));
    c->add_option("--n-particles", base_particles, "Particles (default from preset)");
    add_common(c, base_o);
  }
  brw->add_option("--sigma", rw_sigma, "RW scale");
  brw->add_option("--n-iter", rw_iter, "Chain length");
  bais->add_option("--sigma", ais_sigma, "RW scale");
  bais->add_option("--n-iter", ais_iter, "RW steps per temperature");
  bais->add_option("--n-temps", ais_temps, "Number of temperatures L");

  ContractionStudyConfig grid_cfg;
  std::string grid_kernel = "rw";
  std::string grid_out;
  auto* grid = app.add_subcommand("exact-grid", "Exact grid iterates on the bimodal 1D target");
  grid->add_option("--epsilon", grid_cfg.epsilon, "Mirror step");
  grid->add_option("--iterations", grid_cfg.n_iterations, "Number of iterations");
  grid->add_option("--grid-size", grid_cfg.grid_size, "Grid cells");
  grid->add_option("--kernel", grid_kernel, "rw or ula")->check(CLI::IsMember({"rw", "ula"}));
  grid->add_option("--step", grid_cfg.step, "RW sigma or ULA gamma");
  grid->add_option("--lambda", grid_cfg.lambda, "Fixed lambda (adaptive if <= 0)");
  grid->add_option("--beta", grid_cfg.beta, "Fallback lambda of the adaptive rule");
  grid->add_option("--out", grid_out, "CSV path (stdout if empty)");

  CLI11_PARSE(app, argc, argv);
  try {
    set_num_threads(threads);
    if (*run) {
      if (list) {
        for (const auto& n : preset_names()) std::cout << n << "\n";
        return 0;
      }
      if (spec_file.empty() == preset_name.empty()) {
        std::cerr << "error: give exactly one of a spec file or --preset\n";
        return 2;
      }
      ExperimentSpec spec = preset_name.empty() ? load_spec(spec_file) : preset(preset_name);
      apply(spec, run_o);
      return execute(spec, run_o.dry_run);
    }
    if (*baseline) {
      const bool is_rw = brw->parsed();
      ExperimentSpec spec = preset(base_target + (is_rw ? "-rw" : "-ais"));
      if (is_rw) {
        if (rw_sigma) spec.rw.kernel.step = *rw_sigma;
        if (rw_iter) spec.rw.kernel.n_steps = *rw_iter;
        if (base_particles) spec.rw.n_particles = base_particles;
      } else {
        if (ais_sigma) spec.ais.sigma = *ais_sigma;
        if (ais_iter) spec.ais.n_steps = *ais_iter;
        if (ais_temps) spec.ais.n_temps = *ais_temps;
        if (base_particles) spec.ais.n_particles = base_particles;
      }
      if (!base_o.out) base_o.out = "runs/" + spec.name;
      apply(spec, base_o);
      return execute(spec, base_o.dry_run);
    }
    if (*grid) {
      grid_cfg.kernel = grid_kernel == "rw" ? GridKernelKind::kRandomWalk : GridKernelKind::kUla;
      const ContractionStudy study = run_contraction_study(grid_cfg);
      std::ofstream file;
      if (!grid_out.empty()) file.open(grid_out, std::ios::trunc);
      std::ostream& os = grid_out.empty() ? std::cout : file;
      os << std::setprecision(17) << "t,kl,tv,lambda\n";
      for (const auto& r : study.rows) {
        os << r.t << ',' << r.kl << ',' << r.tv << ',';
        if (std::isnan(r.lambda)) {
          os << "nan";
        } else {
          os << r.lambda;
        }
        os << '\n';
      }
      std::cerr << "kernel_bias_tv " << study.kernel_bias_tv << "\n";
      return 0;
    }
  } catch (const em2c::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
