#include "deception_lq/riccati.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "deception_lq/errors.hpp"
#include "deception_lq/io.hpp"

namespace deception_lq {

RiccatiVector riccati_rhs(const ModelParams& p, const RiccatiVector& x, const PatternValues& f) {
  const double mu = x[kMu], eta = x[kEta], rho = x[kRho];
  const double gamma = x[kGamma], theta = x[kTheta];
  const double ra = p.r_alpha, rb = p.r_beta, rv = p.r_v;
  const double sw2 = p.sigma_W * p.sigma_W;
  const double k = p.misdirection_gain();
  // lambda^2/(r_beta sigma_W^4) - lambda/sigma_W^2, written as k*lambda/sigma_W^2 - lambda/sigma_W^2
  const double q = p.lambda == 0.0 ? 0.0 : (k - 1.0) * p.lambda / sw2;

  RiccatiVector d{};
  d[kMu] = mu * mu / ra + eta * eta / rb - 2.0 * eta - rv;
  d[kEta] = mu * eta / ra + rho * eta / rb - rho - k * eta * f.f_c;
  d[kRho] = eta * eta / ra + rho * rho / rb - 2.0 * k * rho * f.f_c + q * f.f_c * f.f_c;
  d[kGamma] = mu * gamma / ra + eta * theta / rb - theta + rv * f.vbar - k * eta * f.f_d;
  d[kTheta] = eta * gamma / ra + rho * theta / rb - k * theta * f.f_c - k * f.f_d * rho +
              q * f.f_c * f.f_d;
  d[kXi] = gamma * gamma / (2.0 * ra) + theta * theta / (2.0 * rb) -
           0.5 * p.sigma_B * p.sigma_B * mu - 0.5 * sw2 * rho - k * f.f_d * theta -
           0.5 * rv * f.vbar * f.vbar + 0.5 * q * f.f_d * f.f_d;
  return d;
}

RiccatiVector riccati_rhs(double t, const RiccatiVector& x, const ModelParams& p,
                          const Pattern& f_c, const Pattern& f_d, const Pattern& vbar) {
  return riccati_rhs(p, x, PatternValues{f_c.eval(t), f_d.eval(t), vbar.eval(t)});
}

RiccatiVector terminal_vector(const ModelParams& p) {
  return {p.t_v, 0.0, 0.0, -p.t_v * p.vbar_T, 0.0, 0.5 * p.t_v * p.vbar_T * p.vbar_T};
}

RiccatiCoeffs::RiccatiCoeffs(TimeGrid grid, std::array<std::vector<double>, 6> series)
    : grid_(grid), series_(std::move(series)) {
  for (const auto& s : series_) {
    if (s.size() != grid_.size()) {
      throw DomainError("Riccati coefficient series does not match the grid");
    }
  }
}

RiccatiVector RiccatiCoeffs::at(std::size_t k) const noexcept {
  RiccatiVector x;
  for (std::size_t i = 0; i < 6; ++i) x[i] = series_[i][k];
  return x;
}

RiccatiVector RiccatiCoeffs::interpolate(double t) const {
  const double T = grid_.horizon();
  if (!(t >= -1e-12 * T && t <= T * (1.0 + 1e-12))) {
    throw DomainError(fmt::format("coefficients requested at t = {} outside [0, {}]", t, T));
  }
  t = std::clamp(t, 0.0, T);
  const std::size_t n = grid_.n_steps();
  const std::size_t k = std::min(static_cast<std::size_t>(std::floor(t / grid_.dt())), n);
  if (k == n) return at(n);
  const double t_k = grid_.time(k);
  if (t == t_k) return at(k);
  const double w = (t - t_k) / grid_.dt();
  RiccatiVector x;
  for (std::size_t i = 0; i < 6; ++i) x[i] = (1.0 - w) * series_[i][k] + w * series_[i][k + 1];
  return x;
}

RiccatiVector RiccatiCoeffs::max_abs() const noexcept {
  RiccatiVector m{};
  for (std::size_t i = 0; i < 6; ++i) {
    for (double v : series_[i]) m[i] = std::max(m[i], std::abs(v));
  }
  return m;
}

namespace {

void require_grid(const Pattern& f, const TimeGrid& grid, const char* name) {
  if (!(f.grid() == grid)) {
    throw DomainError(fmt::format("pattern {} is sampled on a different grid", name));
  }
}

RiccatiVector axpy(const RiccatiVector& x, double a, const RiccatiVector& k) {
  RiccatiVector out;
  for (std::size_t i = 0; i < 6; ++i) out[i] = x[i] + a * k[i];
  return out;
}

}  // namespace

RiccatiCoeffs solve_backward(const ModelParams& p, const Pattern& f_c, const Pattern& f_d,
                             const Pattern& vbar, const TimeGrid& grid) {
  require_grid(f_c, grid, "f_c");
  require_grid(f_d, grid, "f_d");
  require_grid(vbar, grid, "vbar");

  const std::size_t n = grid.n_steps();
  std::array<std::vector<double>, 6> series;
  for (auto& s : series) s.assign(n + 1, 0.0);

  RiccatiVector x = terminal_vector(p);
  for (std::size_t i = 0; i < 6; ++i) series[i][n] = x[i];

  const double h = -grid.dt();
  for (std::size_t step = n; step > 0; --step) {
    const PatternValues right{f_c[step], f_d[step], vbar[step]};
    const PatternValues mid{f_c.midpoint(step - 1), f_d.midpoint(step - 1), vbar.midpoint(step - 1)};
    const PatternValues left{f_c[step - 1], f_d[step - 1], vbar[step - 1]};

    const RiccatiVector k1 = riccati_rhs(p, x, right);
    const RiccatiVector k2 = riccati_rhs(p, axpy(x, 0.5 * h, k1), mid);
    const RiccatiVector k3 = riccati_rhs(p, axpy(x, 0.5 * h, k2), mid);
    const RiccatiVector k4 = riccati_rhs(p, axpy(x, h, k3), left);
    for (std::size_t i = 0; i < 6; ++i) {
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(x[i])) {
        throw SolverError(fmt::format("non-finite Riccati coefficient at t = {} (grid too coarse "
                                      "or lambda outside its bound)",
                                      grid.time(step - 1)),
                          step - 1);
      }
      series[i][step - 1] = x[i];
    }
  }
  return RiccatiCoeffs(grid, std::move(series));
}

bool baseline_check(const RiccatiCoeffs& c, double tol) {
  const RiccatiVector m = c.max_abs();
  return m[kEta] <= tol && m[kRho] <= tol && m[kTheta] <= tol;
}

void write_csv(std::ostream& out, const RiccatiCoeffs& c) {
  CsvWriter csv(out, {"t", "mu", "eta", "rho", "gamma", "theta", "xi"});
  const TimeGrid& g = c.grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const RiccatiVector x = c.at(k);
    csv.row({g.time(k), x[0], x[1], x[2], x[3], x[4], x[5]});
  }
}

}  // namespace deception_lq
