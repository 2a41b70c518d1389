#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deception_lq/config.hpp"
#include "deception_lq/errors.hpp"
#include "deception_lq/monte_carlo.hpp"
#include "deception_lq/redopt.hpp"
#include "deception_lq/sht.hpp"

namespace deception_lq {

/// Failure inside one named stage of a run: config, riccati, simulate,
/// moments, optimize, validate or output.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error(stage + ": " + cause), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

std::string_view library_version() noexcept;

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

struct ArtifactRecord {
  std::string file;
  std::uintmax_t bytes = 0;
  std::string sha256;
};

/// Digest of every listed file, relative to `dir`.
std::vector<ArtifactRecord> describe_artifacts(const std::filesystem::path& dir,
                                               const std::vector<std::string>& files);

struct BlueCaseOutcome {
  std::string name;
  std::string f_c;
  double lambda = 0.0;
  CostEstimate primary_cost{};
  CostEstimate blue_cost{};
  ExpectedLogL log_likelihood{};
  double mean_Y_T = 0.0;
  double max_abs_beta = 0.0;
};

struct BlueSimReport {
  std::vector<BlueCaseOutcome> cases;
  std::vector<std::string> artifacts;
};

/// Per case: Riccati coefficients, ensemble means, exported paths; plus a
/// summary table over cases.
BlueSimReport run_blue_sim(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct SweepRow {
  double lambda = 0.0;
  CostEstimate primary_cost{};
  CostEstimate blue_cost{};
  ExpectedLogL log_likelihood{};
};

struct BlueSweepReport {
  std::vector<SweepRow> rows;
  std::vector<std::string> artifacts;
};

/// One Monte Carlo run per lambda with the same seed; table as CSV and JSON
/// plus the ensemble means of every lambda.
BlueSweepReport run_blue_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct CalibrationRow {
  double lambda = 0.0;
  double baseline = 0.0;
  double relative_error = 0.0;
};

struct ConsistencyGroup {
  PenaltyKind penalty = PenaltyKind::quadratic;
  double lambda_reg = 0.0;
  /// Indices into RedOptReport::results.
  std::vector<std::size_t> members;
  ConsistencyReport report;
};

struct RedOptReport {
  std::vector<CalibrationRow> calibration;
  /// False when calibration was requested and no candidate met the tolerance.
  bool calibrated = true;
  double lambda = 0.0;
  /// E log L at f_init under `lambda`.
  double baseline = 0.0;
  std::vector<RedResult> results;
  std::vector<ConsistencyGroup> consistency;
  std::vector<std::string> artifacts;
};

/// Optional lambda calibration, then every (penalty, lambda_reg, method)
/// combination, then cross-validation within each (penalty, lambda_reg).
RedOptReport run_red_opt(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct MomentComparison {
  std::string name;
  double analytic = 0.0;
  CostEstimate monte_carlo{};
  double z = 0.0;
};

struct MomentsReport {
  double expected_log_L = 0.0;
  std::optional<std::string> invariant_violation;
  /// Terminal h20, h11, h02 against Monte Carlo; empty when mc.paths = 0.
  std::vector<MomentComparison> terminal;
  std::vector<std::string> artifacts;
};

MomentsReport run_moments(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

enum class PropertyStatus { pass, fail, skipped };

std::string_view to_string(PropertyStatus status) noexcept;

struct PropertyResult {
  std::string name;
  PropertyStatus status = PropertyStatus::skipped;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<PropertyResult> properties;
  std::vector<std::string> artifacts;

  bool all_passed() const noexcept;
  const PropertyResult* find(std::string_view name) const noexcept;
};

/// Runs the property suite on the configured model. Property failures are
/// report entries, not errors.
ValidationReport run_validate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

struct RunSummary {
  ExperimentKind kind = ExperimentKind::blue_sim;
  std::vector<ArtifactRecord> artifacts;
  double duration_seconds = 0.0;
  /// False only for validate runs with a failed property.
  bool passed = true;
  /// One line per notable result, for the terminal.
  std::vector<std::string> lines;
};

/// Dispatches on cfg.kind, then writes manifest.json next to the artifacts.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace deception_lq
