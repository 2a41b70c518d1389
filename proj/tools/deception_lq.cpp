#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "deception_lq/config.hpp"
#include "deception_lq/experiment.hpp"

namespace dlq = deception_lq;

namespace {

constexpr int kExitError = 1;
constexpr int kExitValidationFailed = 3;

struct Options {
  std::string config_path;
  std::string preset;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> grid;
  std::optional<unsigned> workers;
};

std::string read_config_text(const Options& o) {
  if (!o.preset.empty()) {
    const auto text = dlq::preset_text(o.preset);
    if (!text) throw dlq::StageError("config", fmt::format("unknown preset '{}'", o.preset));
    return std::string(*text);
  }
  std::ifstream in(o.config_path, std::ios::binary);
  if (!in) throw dlq::StageError("config", fmt::format("cannot open {}", o.config_path));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(dlq::ExperimentKind kind, const Options& o) {
  dlq::ExperimentConfig cfg;
  try {
    cfg = dlq::load_config(read_config_text(o));
    dlq::apply_overrides(cfg, {o.seed, o.paths, o.grid, o.workers});
  } catch (const dlq::StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw dlq::StageError("config", e.what());
  }
  if (cfg.kind != kind) {
    throw dlq::StageError("config", fmt::format("config describes experiment '{}', not '{}'",
                                                dlq::to_string(cfg.kind), dlq::to_string(kind)));
  }
  const dlq::RunSummary summary = dlq::run_experiment(cfg, o.out_dir);
  for (const auto& line : summary.lines) std::cout << line << '\n';
  std::cout << fmt::format("{} artifacts and manifest.json written to {} in {:.2f} s\n",
                           summary.artifacts.size(), o.out_dir, summary.duration_seconds);
  return summary.passed ? 0 : kExitValidationFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strategic misdirection and counter-deception in a linear-quadratic game"};
  app.set_version_flag("--version", std::string(dlq::library_version()));
  app.require_subcommand(1);

  Options options;
  struct Command {
    const char* name;
    dlq::ExperimentKind kind;
    const char* description;
  };
  const Command commands[] = {
      {"blue-sim", dlq::ExperimentKind::blue_sim, "Simulate optimal blue-team trajectories per f_c case"},
      {"blue-sweep", dlq::ExperimentKind::blue_sweep,
       "Primary cost and E log L across misdirection intensities"},
      {"red-opt", dlq::ExperimentKind::red_opt,
       "Optimise the red team's pattern with FPI, FBS and basis GD"},
      {"moments", dlq::ExperimentKind::moments,
       "Second-moment ODEs and analytic E log L against Monte Carlo"},
      {"validate", dlq::ExperimentKind::validate, "Property checks with a pass/fail report"},
  };
  std::optional<dlq::ExperimentKind> chosen;
  for (const auto& [name, kind, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    auto* config = sub->add_option("--config", options.config_path, "Config file")->check(CLI::ExistingFile);
    auto* preset = sub->add_option("--preset", options.preset, "Bundled config (fig1, fig2, fig3, tab1, moments, validate)");
    config->excludes(preset);
    sub->add_option("--out", options.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", options.seed, "Monte Carlo seed");
    sub->add_option("--paths", options.paths, "Number of Monte Carlo paths");
    sub->add_option("--grid", options.grid, "Number of time steps");
    sub->add_option("--workers", options.workers, "Worker threads (0 = all cores)");
    sub->callback([&chosen, kind = kind] { chosen = kind; });
  }
  app.add_subcommand("presets", "List bundled configs")->callback([] {
    for (auto name : dlq::preset_names()) std::cout << name << '\n';
  });

  CLI11_PARSE(app, argc, argv);
  if (!chosen) return 0;
  if (options.config_path.empty() && options.preset.empty()) {
    std::cerr << "deception-lq: config: one of --config or --preset is required\n";
    return kExitError;
  }
  try {
    return run(*chosen, options);
  } catch (const dlq::StageError& e) {
    std::cerr << "deception-lq: " << e.stage() << " stage failed: "
              << std::string_view(e.what()).substr(e.stage().size() + 2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "deception-lq: failed: " << e.what() << '\n';
  }
  return kExitError;
}
