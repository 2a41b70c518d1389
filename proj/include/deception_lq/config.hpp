#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deception_lq/model.hpp"
#include "deception_lq/redopt.hpp"

namespace deception_lq {

enum class ExperimentKind { blue_sim, blue_sweep, red_opt, moments, validate };

std::string_view to_string(ExperimentKind kind) noexcept;
/// Accepts both "blue_sim" and "blue-sim" spellings.
std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) noexcept;

/// Ordered `key = value` entries of a config file. Blank lines and lines
/// starting with '#' are skipped; duplicate keys are rejected.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Throws ConfigError naming the offending line.
ConfigEntries parse_config_text(std::string_view text);

/// One blue_sim case: its own f_c and, optionally, its own lambda.
struct BlueCase {
  std::string name;
  PatternSpec f_c;
  double lambda = 0.0;
};

struct RedSettings {
  std::vector<RedMethod> methods{RedMethod::fpi, RedMethod::fbs, RedMethod::gd};
  std::vector<PenaltyKind> penalties;
  std::vector<double> lambda_regs;
  /// When non-empty (together with baseline_target), params.lambda is replaced
  /// by the candidate whose baseline E log L at f_init lies closest to the target.
  std::vector<double> lambda_candidates;
  std::optional<double> baseline_target;
  double baseline_tolerance = 0.05;
  double consistency_threshold = 0.05;
  PatternSpec f_init = pattern_kind::Constant{1.0};
  std::optional<PatternSpec> f0;
  SweepOptions sweep;
  GradientDescentOptions gd;
  Basis basis{Basis::Kind::polynomial, 4};
};

struct ValidateSettings {
  std::size_t hjb_points = 100;
  double order_min = 12.0;
  double order_max = 20.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::blue_sim;
  /// Not validated for kind validate, where invalid parameters become report
  /// entries instead of errors.
  ModelParams params;
  std::size_t n_steps = 0;
  PatternSpec f_c = pattern_kind::Constant{0.0};
  PatternSpec f_d = pattern_kind::Constant{0.0};
  PatternSpec vbar = pattern_kind::Constant{0.0};

  std::vector<BlueCase> cases;
  std::vector<double> lambdas;

  std::size_t n_paths = 10000;
  std::uint64_t seed = 0;
  std::size_t export_paths = 0;
  unsigned workers = 0;

  RedSettings red;
  ValidateSettings validate;

  /// Effective entries after overrides, echoed into the run manifest.
  ConfigEntries entries;

  TimeGrid grid() const { return TimeGrid(params.horizon_T, n_steps); }
};

/// Parses and checks a config: unknown keys, keys that the experiment kind
/// does not use, and missing required keys are ConfigErrors.
ExperimentConfig load_config(std::string_view text);

/// Command-line overrides of the corresponding config fields.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> grid;
  std::optional<unsigned> workers;
};

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& overrides);

/// 2000 steps per unit of horizon, at least 1000.
std::size_t default_steps(double horizon_T);

/// Bundled configs: fig1, fig2, fig3, moments, tab1, validate.
std::vector<std::string_view> preset_names();
/// nullopt for an unknown name.
std::optional<std::string_view> preset_text(std::string_view name);

}  // namespace deception_lq
