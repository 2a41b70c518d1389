#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace deception_lq {

/// Scalar constants of the blue team's linear-quadratic game.
///
/// Dynamics:   dV = alpha dt + sigma_B dB,   dY = (V + beta) dt + sigma_W dW.
/// Costs:      r = r_alpha/2 alpha^2 + r_beta/2 beta^2 + r_v/2 (v - vbar(t))^2,
///             g = t_v/2 (v - vbar_T)^2.
/// `lambda` weighs the expected log-likelihood ratio the blue team tries to raise.
struct ModelParams {
  double horizon_T = 1.0;
  double sigma_B = 0.25;
  double sigma_W = 0.25;
  double r_alpha = 1.0;
  double r_beta = 10.0;
  double r_v = 1.0;
  double t_v = 1.0;
  double vbar_T = 0.0;
  double lambda = 0.0;
  double v0 = 0.0;
  double y0 = 0.0;

  /// Upper end of the admissible misdirection range, r_beta * sigma_W^2.
  double lambda_bound() const noexcept { return r_beta * sigma_W * sigma_W; }

  /// lambda / (r_beta sigma_W^2): the gain multiplying f_c, f_d inside beta_hat.
  /// Defined as 0 when lambda == 0 so that degenerate test setups stay finite.
  double misdirection_gain() const noexcept {
    return lambda == 0.0 ? 0.0 : lambda / (r_beta * sigma_W * sigma_W);
  }

  bool operator==(const ModelParams&) const = default;
};

/// Returns `p` unchanged if every invariant holds; throws InvalidParams naming
/// the first violated invariant otherwise.
ModelParams validate_params(const ModelParams& p);

/// Uniform grid t_k = k * dt on [0, T], k = 0..n_steps.
class TimeGrid {
 public:
  TimeGrid(double horizon_T, std::size_t n_steps);

  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t size() const noexcept { return n_steps_ + 1; }
  double horizon() const noexcept { return horizon_; }
  double dt() const noexcept { return dt_; }

  /// Exact 0 at k = 0 and exactly T at k = n_steps.
  double time(std::size_t k) const noexcept {
    return k == n_steps_ ? horizon_ : static_cast<double>(k) * dt_;
  }
  std::vector<double> times() const;

  /// Trapezoid weights: dt/2 at both ends, dt inside.
  double trapezoid_weight(std::size_t k) const noexcept {
    return (k == 0 || k == n_steps_) ? 0.5 * dt_ : dt_;
  }

  bool operator==(const TimeGrid&) const = default;

 private:
  double horizon_;
  std::size_t n_steps_;
  double dt_;
};

/// A real function on [0, T] stored as samples on a TimeGrid and evaluated by
/// piecewise-linear interpolation.
class Pattern {
 public:
  Pattern(TimeGrid grid, std::vector<double> values, std::string label = {});

  const TimeGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  const std::string& label() const noexcept { return label_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Exact sample at grid times, linear interpolation in between. Throws
  /// DomainError for t outside [0, T].
  double eval(double t) const;

  /// Value halfway between samples k and k + 1.
  double midpoint(std::size_t k) const noexcept { return 0.5 * (values_[k] + values_[k + 1]); }

  bool is_zero() const noexcept;

 private:
  TimeGrid grid_;
  std::vector<double> values_;
  std::string label_;
};

double pattern_eval(const Pattern& f, double t);

namespace pattern_kind {
struct Constant {
  double value = 0.0;
};
/// amplitude * sin(omega * t)
struct Sinusoid {
  double amplitude = 1.0;
  double omega = 1.0;
};
/// intercept + slope * t
struct Affine {
  double intercept = 0.0;
  double slope = 0.0;
};
struct Samples {
  std::vector<double> values;
};
}  // namespace pattern_kind

using PatternSpec = std::variant<pattern_kind::Constant, pattern_kind::Sinusoid,
                                 pattern_kind::Affine, pattern_kind::Samples>;

/// Samples `spec` on `grid`. Closed-form kinds are evaluated directly at each
/// grid time.
Pattern make_pattern(const PatternSpec& spec, const TimeGrid& grid, std::string label = {});

/// Short human-readable description, e.g. "sinusoid(amp=0.5, omega=31.4159)".
std::string describe(const PatternSpec& spec);

}  // namespace deception_lq
