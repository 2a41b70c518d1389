#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "deception_lq/model.hpp"
#include "deception_lq/riccati.hpp"
#include "deception_lq/simulate.hpp"

namespace deception_lq {

/// Discretised log-likelihood ratio of H1 (beta = f_c y + f_d) against H0
/// (beta = 0) on one path, Ito (left-endpoint) convention:
///   (1/sigma_W^2) [ sum g_k dY_k - sum V_k g_k dt - 1/2 sum g_k^2 dt ],
/// g_k = f_c(t_k) Y_k + f_d(t_k).
double log_likelihood_path(const PathView& path, const TimeGrid& grid, const Pattern& f_c,
                           const Pattern& f_d, const ModelParams& p);

/// Same statistic with dY replaced by its drift (V + beta) dt, i.e. with the
/// zero-mean martingale term dropped, integrated by the trapezoid rule:
///   (1/sigma_W^2) int (g beta - 1/2 g^2) dt.
double log_likelihood_drift_path(const PathView& path, const TimeGrid& grid, const Pattern& f_c,
                                 const Pattern& f_d, const ModelParams& p);

/// Both Monte Carlo estimators of E log L_T.
struct ExpectedLogL {
  CostEstimate pathwise;
  CostEstimate drift_form;

  double combined_std_error() const;
  /// |pathwise - drift_form| <= n_sigma * combined_std_error().
  bool consistent(double n_sigma = 3.0) const;
};

ExpectedLogL expected_log_L_mc(const PathEnsemble& e, const Pattern& f_c, const Pattern& f_d,
                               const ModelParams& p);

/// Second moments h20 = E[V^2], h11 = E[V Y], h02 = E[Y^2] under the optimal
/// closed loop of the simplified model (f_d = vbar = 0, vbar_T = 0).
class MomentTrajectories {
 public:
  MomentTrajectories(TimeGrid grid, std::vector<double> h20, std::vector<double> h11,
                     std::vector<double> h02);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> h20() const noexcept { return h20_; }
  std::span<const double> h11() const noexcept { return h11_; }
  std::span<const double> h02() const noexcept { return h02_; }

 private:
  TimeGrid grid_;
  std::vector<double> h20_, h11_, h02_;
};

/// Forward RK4 of the moment system from (V0^2, V0 Y0, Y0^2). Coefficients at
/// half steps are averages of neighbouring samples. Requires gamma = theta = 0.
MomentTrajectories solve_moments(const ModelParams& p, const RiccatiCoeffs& coeffs,
                                 const Pattern& f_c, const TimeGrid& grid);

/// Pointwise integrand of E log L_T in the simplified model:
///   (1/sigma_W^2) [ (-eta h11/r_beta - rho h02/r_beta) f_c + (k - 1/2) h02 f_c^2 ].
double expected_log_L_integrand(const ModelParams& p, double eta, double rho, double h11,
                                double h02, double f_c);

/// Trapezoid of expected_log_L_integrand over the grid.
double expected_log_L_analytic(const MomentTrajectories& m, const RiccatiCoeffs& coeffs,
                               const Pattern& f_c, const ModelParams& p);

/// (lambda/(r_beta sigma_W^2) - 1/2) h02: the coefficient of f_c^2 in the
/// integrand above, up to the 1/sigma_W^2 factor.
double fc_squared_coefficient(const ModelParams& p, double h02);

/// First violated invariant (non-negativity of h20/h02 or Cauchy-Schwarz
/// h11^2 <= h20 h02 + 1e-8 (1 + h20 h02)), or nullopt when all hold.
std::optional<std::string> check_moment_invariants(const MomentTrajectories& m);

/// Columns t, h20, h11, h02.
void write_csv(std::ostream& out, const MomentTrajectories& m);

}  // namespace deception_lq
