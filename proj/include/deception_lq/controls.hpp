#pragma once

#include <cstddef>

#include "deception_lq/model.hpp"
#include "deception_lq/riccati.hpp"

namespace deception_lq {

struct Controls {
  double alpha = 0.0;
  double beta = 0.0;
};

/// Markov feedback evaluated by the simulator at grid step k (time t).
class FeedbackPolicy {
 public:
  virtual ~FeedbackPolicy() = default;
  virtual Controls at_step(std::size_t k, double t, double v, double y) const = 0;
};

/// The semi-explicit optimal feedback pair. Always built by `solve`, so the
/// coefficients belong to exactly these parameters and patterns.
class ControlLaw final : public FeedbackPolicy {
 public:
  /// Validates `p`, then solves the coefficient system on the patterns' grid.
  static ControlLaw solve(const ModelParams& p, Pattern f_c, Pattern f_d, Pattern vbar);

  const ModelParams& params() const noexcept { return params_; }
  const RiccatiCoeffs& coeffs() const noexcept { return coeffs_; }
  const Pattern& f_c() const noexcept { return f_c_; }
  const Pattern& f_d() const noexcept { return f_d_; }
  const Pattern& vbar() const noexcept { return vbar_; }
  const TimeGrid& grid() const noexcept { return coeffs_.grid(); }

  double alpha(double t, double v, double y) const;
  double beta(double t, double v, double y) const;
  double value(double t, double v, double y) const;

  /// Grid-exact evaluation at t_k, no interpolation.
  Controls at_step(std::size_t k, double t, double v, double y) const override;

 private:
  ControlLaw(const ModelParams& p, RiccatiCoeffs coeffs, Pattern f_c, Pattern f_d, Pattern vbar);

  ModelParams params_;
  RiccatiCoeffs coeffs_;
  Pattern f_c_;
  Pattern f_d_;
  Pattern vbar_;
};

/// -(mu/r_alpha) v - (eta/r_alpha) y - gamma/r_alpha
double alpha_hat(const ControlLaw& law, double t, double v, double y);
/// -(eta/r_beta) v + (k f_c - rho/r_beta) y + (k f_d - theta/r_beta), k = lambda/(r_beta sigma_W^2)
double beta_hat(const ControlLaw& law, double t, double v, double y);
double value_function(const ControlLaw& law, double t, double v, double y);

/// r_alpha/2 alpha^2 + r_beta/2 beta^2 + r_v/2 (v - vbar_t)^2
double running_cost_r(const ModelParams& p, double vbar_t, double v, double y, double alpha,
                      double beta);
double running_cost_r(const ModelParams& p, const Pattern& vbar, double t, double v, double y,
                      double alpha, double beta);

/// t_v/2 (v - vbar_T)^2
double terminal_cost_g(const ModelParams& p, double v, double y);

/// r - lambda/sigma_W^2 (f_c y + f_d) beta + lambda/(2 sigma_W^2) (f_c y + f_d)^2
double running_cost_h(const ModelParams& p, const PatternValues& f, double v, double y,
                      double alpha, double beta);
double running_cost_h(const ModelParams& p, const Pattern& f_c, const Pattern& f_d,
                      const Pattern& vbar, double t, double v, double y, double alpha,
                      double beta);

/// The expression minimised inside the HJB equation,
///   alpha V_v + (v + beta) V_y + sigma_B^2/2 V_vv + sigma_W^2/2 V_yy + h,
/// with V's spatial derivatives taken analytically from the quadratic form.
double hjb_integrand(const ControlLaw& law, double t, double v, double y, double alpha,
                     double beta);

/// V_t + min over (alpha, beta) of hjb_integrand, with V_t built from the
/// coefficient right-hand side. Zero for an exact solution.
double hjb_residual(const ControlLaw& law, double t, double v, double y);

}  // namespace deception_lq
