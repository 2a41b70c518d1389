#include "deception_lq/sht.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "deception_lq/errors.hpp"
#include "deception_lq/io.hpp"
#include "deception_lq/numerics.hpp"

namespace deception_lq {

namespace {

void require_consistent(const PathView& path, const TimeGrid& grid, const Pattern& f_c,
                        const Pattern& f_d) {
  if (!(f_c.grid() == grid) || !(f_d.grid() == grid)) {
    throw DomainError("likelihood statistic: pattern grid differs from the path grid");
  }
  if (path.Y.size() != grid.size() || path.V.size() != grid.size() ||
      path.beta.size() != grid.size()) {
    throw DomainError("likelihood statistic: path length differs from the grid");
  }
}

}  // namespace

double log_likelihood_path(const PathView& path, const TimeGrid& grid, const Pattern& f_c,
                           const Pattern& f_d, const ModelParams& p) {
  require_consistent(path, grid, f_c, f_d);
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  std::vector<double> terms(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double g = f_c[k] * path.Y[k] + f_d[k];
    const double dY = path.Y[k + 1] - path.Y[k];
    terms[k] = g * dY - path.V[k] * g * dt - 0.5 * g * g * dt;
  }
  return pairwise_sum(terms) / (p.sigma_W * p.sigma_W);
}

double log_likelihood_drift_path(const PathView& path, const TimeGrid& grid, const Pattern& f_c,
                                 const Pattern& f_d, const ModelParams& p) {
  require_consistent(path, grid, f_c, f_d);
  std::vector<double> integrand(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double g = f_c[k] * path.Y[k] + f_d[k];
    integrand[k] = g * path.beta[k] - 0.5 * g * g;
  }
  return trapezoid(grid, integrand) / (p.sigma_W * p.sigma_W);
}

double ExpectedLogL::combined_std_error() const {
  return std::hypot(pathwise.std_error, drift_form.std_error);
}

bool ExpectedLogL::consistent(double n_sigma) const {
  return std::abs(pathwise.mean - drift_form.mean) <= n_sigma * combined_std_error();
}

ExpectedLogL expected_log_L_mc(const PathEnsemble& e, const Pattern& f_c, const Pattern& f_d,
                               const ModelParams& p) {
  std::vector<double> a(e.n_paths()), b(e.n_paths());
  for (std::size_t k = 0; k < e.n_paths(); ++k) {
    const PathView path = e.path(k);
    a[k] = log_likelihood_path(path, e.grid(), f_c, f_d, p);
    b[k] = log_likelihood_drift_path(path, e.grid(), f_c, f_d, p);
  }
  return {make_estimate(a), make_estimate(b)};
}

MomentTrajectories::MomentTrajectories(TimeGrid grid, std::vector<double> h20,
                                       std::vector<double> h11, std::vector<double> h02)
    : grid_(grid), h20_(std::move(h20)), h11_(std::move(h11)), h02_(std::move(h02)) {
  if (h20_.size() != grid_.size() || h11_.size() != grid_.size() || h02_.size() != grid_.size()) {
    throw DomainError("moment trajectories do not match the grid");
  }
}

namespace {

using Moments = std::array<double, 3>;

struct MomentCoefficients {
  double mu, eta, rho, f_c;
};

Moments moment_rhs(const ModelParams& p, const Moments& h, const MomentCoefficients& c) {
  const double k = p.misdirection_gain();
  const double ra = p.r_alpha, rb = p.r_beta;
  const double y_gain = k * c.f_c - c.rho / rb;  // coefficient of y in beta_hat
  const double v_to_y = 1.0 - c.eta / rb;        // coefficient of v in dY drift
  return {
      -2.0 * c.mu / ra * h[0] - 2.0 * c.eta / ra * h[1] + p.sigma_B * p.sigma_B,
      (y_gain - c.mu / ra) * h[1] + v_to_y * h[0] - c.eta / ra * h[2],
      2.0 * v_to_y * h[1] + 2.0 * y_gain * h[2] + p.sigma_W * p.sigma_W,
  };
}

}  // namespace

MomentTrajectories solve_moments(const ModelParams& p, const RiccatiCoeffs& coeffs,
                                 const Pattern& f_c, const TimeGrid& grid) {
  if (!(coeffs.grid() == grid) || !(f_c.grid() == grid)) {
    throw DomainError("solve_moments: coefficient or pattern grid differs from the target grid");
  }
  const RiccatiVector peak = coeffs.max_abs();
  if (peak[kGamma] != 0.0 || peak[kTheta] != 0.0) {
    throw DomainError(
        "solve_moments: gamma and theta must vanish (requires f_d = vbar = 0 and vbar_T = 0)");
  }
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  auto mu = coeffs.mu(), eta = coeffs.eta(), rho = coeffs.rho();

  std::vector<double> h20(n + 1), h11(n + 1), h02(n + 1);
  Moments h{p.v0 * p.v0, p.v0 * p.y0, p.y0 * p.y0};
  h20[0] = h[0];
  h11[0] = h[1];
  h02[0] = h[2];
  auto shifted = [](const Moments& base, double a, const Moments& d) {
    return Moments{base[0] + a * d[0], base[1] + a * d[1], base[2] + a * d[2]};
  };
  for (std::size_t i = 0; i < n; ++i) {
    const MomentCoefficients left{mu[i], eta[i], rho[i], f_c[i]};
    const MomentCoefficients mid{0.5 * (mu[i] + mu[i + 1]), 0.5 * (eta[i] + eta[i + 1]),
                                 0.5 * (rho[i] + rho[i + 1]), f_c.midpoint(i)};
    const MomentCoefficients right{mu[i + 1], eta[i + 1], rho[i + 1], f_c[i + 1]};
    const Moments k1 = moment_rhs(p, h, left);
    const Moments k2 = moment_rhs(p, shifted(h, 0.5 * dt, k1), mid);
    const Moments k3 = moment_rhs(p, shifted(h, 0.5 * dt, k2), mid);
    const Moments k4 = moment_rhs(p, shifted(h, dt, k3), right);
    for (std::size_t j = 0; j < 3; ++j) {
      h[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      if (!std::isfinite(h[j])) {
        throw SolverError(fmt::format("non-finite moment at t = {}", grid.time(i + 1)), i + 1);
      }
    }
    h20[i + 1] = h[0];
    h11[i + 1] = h[1];
    h02[i + 1] = h[2];
  }
  return MomentTrajectories(grid, std::move(h20), std::move(h11), std::move(h02));
}

double fc_squared_coefficient(const ModelParams& p, double h02) {
  return (p.misdirection_gain() - 0.5) * h02;
}

double expected_log_L_integrand(const ModelParams& p, double eta, double rho, double h11,
                                double h02, double f_c) {
  const double rb = p.r_beta;
  const double linear = -eta / rb * h11 - rho / rb * h02;
  return (linear * f_c + fc_squared_coefficient(p, h02) * f_c * f_c) / (p.sigma_W * p.sigma_W);
}

double expected_log_L_analytic(const MomentTrajectories& m, const RiccatiCoeffs& coeffs,
                               const Pattern& f_c, const ModelParams& p) {
  const TimeGrid& grid = m.grid();
  if (!(coeffs.grid() == grid) || !(f_c.grid() == grid)) {
    throw DomainError("expected_log_L_analytic: grids differ");
  }
  std::vector<double> integrand(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    integrand[k] =
        expected_log_L_integrand(p, coeffs.eta()[k], coeffs.rho()[k], m.h11()[k], m.h02()[k], f_c[k]);
  }
  return trapezoid(grid, integrand);
}

std::optional<std::string> check_moment_invariants(const MomentTrajectories& m) {
  for (std::size_t k = 0; k < m.grid().size(); ++k) {
    const double h20 = m.h20()[k], h11 = m.h11()[k], h02 = m.h02()[k];
    if (h20 < 0.0) return fmt::format("h20 < 0 at step {} ({})", k, h20);
    if (h02 < 0.0) return fmt::format("h02 < 0 at step {} ({})", k, h02);
    if (h11 * h11 > h20 * h02 + 1e-8 * (1.0 + h20 * h02)) {
      return fmt::format("Cauchy-Schwarz violated at step {}: h11^2 = {} > h20 h02 = {}", k,
                         h11 * h11, h20 * h02);
    }
  }
  return std::nullopt;
}

void write_csv(std::ostream& out, const MomentTrajectories& m) {
  CsvWriter csv(out, {"t", "h20", "h11", "h02"});
  for (std::size_t k = 0; k < m.grid().size(); ++k) {
    csv.row({m.grid().time(k), m.h20()[k], m.h11()[k], m.h02()[k]});
  }
}

}  // namespace deception_lq
