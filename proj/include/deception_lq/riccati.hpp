#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "deception_lq/model.hpp"

namespace deception_lq {

/// Coefficients of the quadratic value function
///   V(t, v, y) = mu/2 v^2 + eta v y + rho/2 y^2 + gamma v + theta y + xi
/// in that order.
using RiccatiVector = std::array<double, 6>;

enum RiccatiIndex : std::size_t { kMu = 0, kEta, kRho, kGamma, kTheta, kXi };

/// Pattern values entering the right-hand side at one instant.
struct PatternValues {
  double f_c = 0.0;
  double f_d = 0.0;
  double vbar = 0.0;
};

/// Time derivative of the six coefficients given the pattern values at t.
RiccatiVector riccati_rhs(const ModelParams& p, const RiccatiVector& x, const PatternValues& f);

/// Same, with the patterns evaluated at t by piecewise-linear interpolation.
RiccatiVector riccati_rhs(double t, const RiccatiVector& x, const ModelParams& p,
                          const Pattern& f_c, const Pattern& f_d, const Pattern& vbar);

/// Values at t = T: (t_v, 0, 0, -t_v vbar_T, 0, t_v/2 vbar_T^2).
RiccatiVector terminal_vector(const ModelParams& p);

/// Grid-sampled solution of the backward coefficient system. Immutable.
class RiccatiCoeffs {
 public:
  RiccatiCoeffs(TimeGrid grid, std::array<std::vector<double>, 6> series);

  const TimeGrid& grid() const noexcept { return grid_; }

  std::span<const double> mu() const noexcept { return series_[kMu]; }
  std::span<const double> eta() const noexcept { return series_[kEta]; }
  std::span<const double> rho() const noexcept { return series_[kRho]; }
  std::span<const double> gamma() const noexcept { return series_[kGamma]; }
  std::span<const double> theta() const noexcept { return series_[kTheta]; }
  std::span<const double> xi() const noexcept { return series_[kXi]; }
  std::span<const double> series(RiccatiIndex i) const noexcept { return series_[i]; }

  RiccatiVector at(std::size_t k) const noexcept;
  /// Piecewise-linear interpolation; DomainError outside [0, T].
  RiccatiVector interpolate(double t) const;

  /// Largest |component| over the whole grid, per component.
  RiccatiVector max_abs() const noexcept;

 private:
  TimeGrid grid_;
  std::array<std::vector<double>, 6> series_;
};

/// Classic fixed-step RK4 from t = T down to t = 0 on `grid`. Pattern values
/// at half steps are the average of the neighbouring samples. Throws
/// SolverError at the first non-finite step.
RiccatiCoeffs solve_backward(const ModelParams& p, const Pattern& f_c, const Pattern& f_d,
                             const Pattern& vbar, const TimeGrid& grid);

/// True iff max |eta|, |rho|, |theta| over the grid is <= tol.
bool baseline_check(const RiccatiCoeffs& c, double tol = 1e-9);

/// Columns t, mu, eta, rho, gamma, theta, xi.
void write_csv(std::ostream& out, const RiccatiCoeffs& c);

}  // namespace deception_lq
