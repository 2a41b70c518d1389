#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "deception_lq/controls.hpp"
#include "deception_lq/sht.hpp"
#include "deception_lq/simulate.hpp"

namespace deception_lq {

struct MonteCarloOptions {
  std::size_t n_paths = 10000;
  std::uint64_t seed = 0;
  SimulationOptions simulation{};
  /// The first export_paths paths are also kept in full as a PathEnsemble.
  std::size_t export_paths = 0;
};

/// Ensemble statistics accumulated path by path without storing the whole
/// ensemble. Per-path draws are identical to simulate_paths with the same seed.
struct MonteCarloSummary {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;

  CostEstimate primary_cost{};
  CostEstimate blue_cost{};
  ExpectedLogL log_likelihood{};

  /// Per-path terminal values V_T, Y_T.
  std::vector<double> terminal_V{};
  std::vector<double> terminal_Y{};

  /// Ensemble means per grid time.
  std::vector<double> mean_V{}, mean_Y{}, mean_alpha{}, mean_beta{};

  /// Largest |beta| observed on any path at any step.
  double max_abs_beta = 0.0;

  std::optional<PathEnsemble> exported{};
};

MonteCarloSummary run_monte_carlo(const ControlLaw& law, const MonteCarloOptions& options);

/// Sample estimates of (E[V_T^2], E[V_T Y_T], E[Y_T^2]) with standard errors.
struct TerminalMoments {
  CostEstimate h20, h11, h02;
};
TerminalMoments terminal_moments(const MonteCarloSummary& s);

/// Columns t, V, Y, alpha, beta of the ensemble means.
void write_mean_csv(std::ostream& out, const MonteCarloSummary& s);

}  // namespace deception_lq
