#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "deception_lq/controls.hpp"
#include "deception_lq/model.hpp"

namespace deception_lq {

/// One simulated path. V, Y, alpha, beta have n_steps + 1 samples; dW holds
/// the n_steps observation-noise increments (already scaled by sqrt(dt)).
struct PathView {
  std::span<const double> V;
  std::span<const double> Y;
  std::span<const double> dW;
  std::span<const double> alpha;
  std::span<const double> beta;
};

/// Stored Monte Carlo paths of (V, Y) with their realised controls.
class PathEnsemble {
 public:
  /// Path-major storage: entry [path * stride + k].
  PathEnsemble(TimeGrid grid, std::size_t n_paths, std::uint64_t seed, std::vector<double> V,
               std::vector<double> Y, std::vector<double> dW, std::vector<double> alpha,
               std::vector<double> beta);

  std::size_t n_paths() const noexcept { return n_paths_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::uint64_t seed() const noexcept { return seed_; }

  PathView path(std::size_t k) const;

 private:
  TimeGrid grid_;
  std::size_t n_paths_;
  std::uint64_t seed_;
  std::vector<double> V_, Y_, dW_, alpha_, beta_;
};

/// Mean of per-path values with its Monte Carlo standard error.
struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
};

CostEstimate make_estimate(std::span<const double> per_path);

struct SimulationOptions {
  /// 0 picks std::thread::hardware_concurrency(). Results never depend on it.
  unsigned workers = 0;
  /// false switches both Brownian drivers off (deterministic paths).
  bool noise = true;
};

/// Euler-Maruyama with left-endpoint controls:
///   V_{k+1} = V_k + alpha_k dt + sigma_B sqrt(dt) z_B
///   Y_{k+1} = Y_k + (V_k + beta_k) dt + sigma_W sqrt(dt) z_W
/// where (z_B, z_W) is the normal pair keyed by (seed, path, k).
PathEnsemble simulate_paths(const FeedbackPolicy& policy, const ModelParams& p,
                            const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                            const SimulationOptions& options = {});
PathEnsemble simulate_paths(const ControlLaw& law, std::size_t n_paths, std::uint64_t seed,
                            const SimulationOptions& options = {});

/// Trapezoid of r(t, V, Y, alpha, beta) plus g(V_T, Y_T) on one path.
double primary_cost_path(const PathView& path, const TimeGrid& grid, const ModelParams& p,
                         const Pattern& vbar);

CostEstimate estimate_primary_cost(const PathEnsemble& e, const ModelParams& p, const Pattern& vbar);

/// Per-path J_primary - lambda * log L_T (pathwise statistic), averaged.
CostEstimate estimate_blue_cost(const PathEnsemble& e, const ModelParams& p, const Pattern& f_c,
                                const Pattern& f_d, const Pattern& vbar);

/// Columns t, V, Y, alpha, beta for one stored path.
void write_path_csv(std::ostream& out, const PathEnsemble& e, std::size_t path);

}  // namespace deception_lq
