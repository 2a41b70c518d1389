#include "deception_lq/redopt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

#include "deception_lq/errors.hpp"
#include "deception_lq/io.hpp"
#include "deception_lq/numerics.hpp"
#include "deception_lq/riccati.hpp"
#include "deception_lq/sht.hpp"

namespace deception_lq {

std::string_view to_string(PenaltyKind kind) noexcept {
  return kind == PenaltyKind::quadratic ? "quadratic" : "kl_log";
}

std::string_view to_string(RedMethod method) noexcept {
  switch (method) {
    case RedMethod::fpi:
      return "fpi";
    case RedMethod::fbs:
      return "fbs";
    case RedMethod::gd:
      return "gd";
  }
  return "unknown";
}

void validate_penalty(const PenaltySpec& spec) {
  if (!std::isfinite(spec.lambda_reg) || spec.lambda_reg < 0.0) {
    throw DomainError(fmt::format("lambda_reg must be finite and >= 0 (got {})", spec.lambda_reg));
  }
  if (spec.kind == PenaltyKind::kl_log) {
    for (double v : spec.f_init.values()) {
      if (!(v > 0.0)) throw DomainError("kl_log penalty needs a strictly positive f_init");
    }
  }
}

namespace {

double penalty_integrand(PenaltyKind kind, double f, double f_init) {
  if (kind == PenaltyKind::quadratic) return (f - f_init) * (f - f_init);
  return f_init * std::log(f_init / f);
}

}  // namespace

double penalty_value(const Pattern& f_c, const PenaltySpec& spec) {
  const TimeGrid& grid = f_c.grid();
  if (!(spec.f_init.grid() == grid)) throw DomainError("penalty: f_init grid differs from f_c grid");
  std::vector<double> integrand(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (spec.kind == PenaltyKind::kl_log && !(f_c[k] > 0.0)) {
      throw DomainError(fmt::format("kl_log penalty needs f_c > 0 (f_c = {} at t = {})", f_c[k],
                                    grid.time(k)));
    }
    integrand[k] = penalty_integrand(spec.kind, f_c[k], spec.f_init[k]);
  }
  return trapezoid(grid, integrand);
}

namespace {

void require_simplified(const ModelParams& p) {
  validate_params(p);
  if (p.vbar_T != 0.0) {
    throw DomainError("red objective requires the simplified setting (vbar_T = 0)");
  }
}

struct ForwardState {
  RiccatiCoeffs coeffs;
  MomentTrajectories moments;
};

ForwardState solve_forward(const Pattern& f_c, const ModelParams& p) {
  const TimeGrid& grid = f_c.grid();
  const Pattern zero(grid, std::vector<double>(grid.size(), 0.0), "zero");
  RiccatiCoeffs coeffs = solve_backward(p, f_c, zero, zero, grid);
  MomentTrajectories moments = solve_moments(p, coeffs, f_c, grid);
  return {std::move(coeffs), std::move(moments)};
}

RedEvaluation evaluate_from(const ForwardState& s, const Pattern& f_c, const ModelParams& p,
                            const PenaltySpec& spec) {
  RedEvaluation e;
  e.expected_log_L = expected_log_L_analytic(s.moments, s.coeffs, f_c, p);
  e.penalty = penalty_value(f_c, spec);
  e.objective = e.expected_log_L + spec.lambda_reg / (p.sigma_W * p.sigma_W) * e.penalty;
  return e;
}

// ---------------------------------------------------------------------------
// Discrete adjoint of the evaluation chain.

using Vec3 = std::array<double, 3>;

Vec3 axpy(const Vec3& x, double a, const Vec3& d) {
  return {x[0] + a * d[0], x[1] + a * d[1], x[2] + a * d[2]};
}

struct Constants {
  double ra, rb, k, q;
};

Constants constants_of(const ModelParams& p) {
  const double s2 = p.sigma_W * p.sigma_W;
  const double k = p.misdirection_gain();
  return {p.r_alpha, p.r_beta, k, p.lambda == 0.0 ? 0.0 : (k - 1.0) * p.lambda / s2};
}

// (mu, eta, rho) block of the coefficient system; the coefficient is f_c.
struct RiccatiBlock {
  using Coef = double;
  const Constants& c;
  double r_v;

  Vec3 rhs(const Vec3& x, Coef f) const {
    const auto [mu, eta, rho] = x;
    return {mu * mu / c.ra + eta * eta / c.rb - 2.0 * eta - r_v,
            mu * eta / c.ra + rho * eta / c.rb - rho - c.k * eta * f,
            eta * eta / c.ra + rho * rho / c.rb - 2.0 * c.k * rho * f + c.q * f * f};
  }
  // J_x^T v
  Vec3 state_vjp(const Vec3& x, Coef f, const Vec3& v) const {
    const auto [mu, eta, rho] = x;
    return {2.0 * mu / c.ra * v[0] + eta / c.ra * v[1],
            (2.0 * eta / c.rb - 2.0) * v[0] + (mu / c.ra + rho / c.rb - c.k * f) * v[1] +
                2.0 * eta / c.ra * v[2],
            (eta / c.rb - 1.0) * v[1] + (2.0 * rho / c.rb - 2.0 * c.k * f) * v[2]};
  }
  // (dF/df)^T v
  Coef coef_vjp(const Vec3& x, Coef f, const Vec3& v) const {
    return -c.k * x[1] * v[1] + (-2.0 * c.k * x[2] + 2.0 * c.q * f) * v[2];
  }
};

// Second-moment system; the coefficient is (mu, eta, rho, f_c).
struct MomentBlock {
  using Coef = std::array<double, 4>;
  const Constants& c;
  double sb2, sw2;

  Vec3 rhs(const Vec3& h, const Coef& a) const {
    const auto [mu, eta, rho, f] = a;
    const double y_gain = c.k * f - rho / c.rb;
    const double v_to_y = 1.0 - eta / c.rb;
    return {-2.0 * mu / c.ra * h[0] - 2.0 * eta / c.ra * h[1] + sb2,
            (y_gain - mu / c.ra) * h[1] + v_to_y * h[0] - eta / c.ra * h[2],
            2.0 * v_to_y * h[1] + 2.0 * y_gain * h[2] + sw2};
  }
  Vec3 state_vjp(const Vec3&, const Coef& a, const Vec3& v) const {
    const auto [mu, eta, rho, f] = a;
    const double y_gain = c.k * f - rho / c.rb;
    const double v_to_y = 1.0 - eta / c.rb;
    return {-2.0 * mu / c.ra * v[0] + v_to_y * v[1],
            -2.0 * eta / c.ra * v[0] + (y_gain - mu / c.ra) * v[1] + 2.0 * v_to_y * v[2],
            -eta / c.ra * v[1] + 2.0 * y_gain * v[2]};
  }
  Coef coef_vjp(const Vec3& h, const Coef&, const Vec3& v) const {
    return {-2.0 * h[0] / c.ra * v[0] - h[1] / c.ra * v[1],
            -2.0 * h[1] / c.ra * v[0] + (-h[0] / c.rb - h[2] / c.ra) * v[1] - 2.0 * h[1] / c.rb * v[2],
            -h[1] / c.rb * v[1] - 2.0 * h[2] / c.rb * v[2],
            c.k * h[1] * v[1] + 2.0 * c.k * h[2] * v[2]};
  }
};

template <class C>
void add_scaled(C& acc, const C& v, double s) {
  if constexpr (std::is_same_v<C, double>) {
    acc += s * v;
  } else {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * v[i];
  }
}

// Reverse pass through one RK4 step out = x + h/6 (k1 + 2 k2 + 2 k3 + k4),
// stage coefficients (first, mid, mid, last). Returns the adjoint of x and
// accumulates the adjoints of the three coefficient values.
template <class System>
Vec3 rk4_vjp(const System& sys, const Vec3& x, double h, const typename System::Coef& first,
             const typename System::Coef& mid, const typename System::Coef& last,
             const Vec3& out_bar, typename System::Coef& first_bar,
             typename System::Coef& mid_bar, typename System::Coef& last_bar) {
  const Vec3 k1 = sys.rhs(x, first);
  const Vec3 a2 = axpy(x, 0.5 * h, k1);
  const Vec3 k2 = sys.rhs(a2, mid);
  const Vec3 a3 = axpy(x, 0.5 * h, k2);
  const Vec3 k3 = sys.rhs(a3, mid);
  const Vec3 a4 = axpy(x, h, k3);

  Vec3 x_bar = out_bar;
  Vec3 k1_bar, k2_bar, k3_bar, k4_bar;
  for (std::size_t i = 0; i < 3; ++i) {
    k1_bar[i] = h / 6.0 * out_bar[i];
    k2_bar[i] = h / 3.0 * out_bar[i];
    k3_bar[i] = h / 3.0 * out_bar[i];
    k4_bar[i] = h / 6.0 * out_bar[i];
  }
  const Vec3 a4_bar = sys.state_vjp(a4, last, k4_bar);
  add_scaled(last_bar, sys.coef_vjp(a4, last, k4_bar), 1.0);
  x_bar = axpy(x_bar, 1.0, a4_bar);
  k3_bar = axpy(k3_bar, h, a4_bar);

  const Vec3 a3_bar = sys.state_vjp(a3, mid, k3_bar);
  add_scaled(mid_bar, sys.coef_vjp(a3, mid, k3_bar), 1.0);
  x_bar = axpy(x_bar, 1.0, a3_bar);
  k2_bar = axpy(k2_bar, 0.5 * h, a3_bar);

  const Vec3 a2_bar = sys.state_vjp(a2, mid, k2_bar);
  add_scaled(mid_bar, sys.coef_vjp(a2, mid, k2_bar), 1.0);
  x_bar = axpy(x_bar, 1.0, a2_bar);
  k1_bar = axpy(k1_bar, 0.5 * h, a2_bar);

  x_bar = axpy(x_bar, 1.0, sys.state_vjp(x, first, k1_bar));
  add_scaled(first_bar, sys.coef_vjp(x, first, k1_bar), 1.0);
  return x_bar;
}

struct Sensitivity {
  /// d E log L / d f_k
  std::vector<double> grad;
  /// Total adjoint of rho_k.
  std::vector<double> rho_bar;
};

Sensitivity log_l_sensitivity(const ForwardState& s, const Pattern& f_c, const ModelParams& p) {
  const TimeGrid& grid = f_c.grid();
  const std::size_t n = grid.n_steps();
  const double dt = grid.dt();
  const double s2 = p.sigma_W * p.sigma_W;
  const Constants c = constants_of(p);
  const auto mu = s.coeffs.mu(), eta = s.coeffs.eta(), rho = s.coeffs.rho();
  const auto h20 = s.moments.h20(), h11 = s.moments.h11(), h02 = s.moments.h02();

  std::vector<Vec3> x_bar(n + 1, Vec3{});
  std::vector<double> f_bar(n + 1, 0.0);
  std::vector<Vec3> h_direct(n + 1, Vec3{});

  // Trapezoid of (1/s2) [(-eta h11 - rho h02)/r_beta f + (k - 1/2) h02 f^2].
  for (std::size_t k = 0; k <= n; ++k) {
    const double w = grid.trapezoid_weight(k) / s2;
    const double f = f_c[k];
    x_bar[k][1] += w * (-h11[k] * f / c.rb);
    x_bar[k][2] += w * (-h02[k] * f / c.rb);
    h_direct[k][1] = w * (-eta[k] * f / c.rb);
    h_direct[k][2] = w * (-rho[k] * f / c.rb + (c.k - 0.5) * f * f);
    f_bar[k] += w * ((-eta[k] * h11[k] - rho[k] * h02[k]) / c.rb + 2.0 * (c.k - 0.5) * h02[k] * f);
  }

  // Moments run forward, so their adjoint runs backward.
  const MomentBlock moments{c, p.sigma_B * p.sigma_B, s2};
  Vec3 h_bar = h_direct[n];
  for (std::size_t i = n; i-- > 0;) {
    const MomentBlock::Coef left{mu[i], eta[i], rho[i], f_c[i]};
    const MomentBlock::Coef mid{0.5 * (mu[i] + mu[i + 1]), 0.5 * (eta[i] + eta[i + 1]),
                                0.5 * (rho[i] + rho[i + 1]), f_c.midpoint(i)};
    const MomentBlock::Coef right{mu[i + 1], eta[i + 1], rho[i + 1], f_c[i + 1]};
    MomentBlock::Coef left_bar{}, mid_bar{}, right_bar{};
    const Vec3 h_i{h20[i], h11[i], h02[i]};
    const Vec3 prev =
        rk4_vjp(moments, h_i, dt, left, mid, right, h_bar, left_bar, mid_bar, right_bar);
    for (std::size_t j = 0; j < 3; ++j) {
      x_bar[i][j] += left_bar[j] + 0.5 * mid_bar[j];
      x_bar[i + 1][j] += right_bar[j] + 0.5 * mid_bar[j];
    }
    f_bar[i] += left_bar[3] + 0.5 * mid_bar[3];
    f_bar[i + 1] += right_bar[3] + 0.5 * mid_bar[3];
    h_bar = axpy(prev, 1.0, h_direct[i]);
  }

  // Coefficients run backward from T, so their adjoint runs forward.
  const RiccatiBlock riccati{c, p.r_v};
  for (std::size_t step = 1; step <= n; ++step) {
    const Vec3 x{mu[step], eta[step], rho[step]};
    double right_bar = 0.0, mid_bar = 0.0, left_bar = 0.0;
    const Vec3 contrib = rk4_vjp(riccati, x, -dt, f_c[step], f_c.midpoint(step - 1),
                                 f_c[step - 1], x_bar[step - 1], right_bar, mid_bar, left_bar);
    x_bar[step] = axpy(x_bar[step], 1.0, contrib);
    f_bar[step] += right_bar + 0.5 * mid_bar;
    f_bar[step - 1] += left_bar + 0.5 * mid_bar;
  }

  Sensitivity out{std::move(f_bar), std::vector<double>(n + 1)};
  for (std::size_t k = 0; k <= n; ++k) out.rho_bar[k] = x_bar[k][2];
  return out;
}

double penalty_derivative(PenaltyKind kind, double f, double f_init) {
  return kind == PenaltyKind::quadratic ? 2.0 * (f - f_init) : -f_init / f;
}

// ---------------------------------------------------------------------------
// Pointwise minimisation shared by FPI and FBS.

inline constexpr double kKlFloor = 1e-8;
inline constexpr double kGuardRadius = 10.0;

struct PointwiseOutcome {
  double f = 0.0;
  bool fallback = false;
  bool clipped = false;
};

struct PointwiseCounts {
  std::size_t fallbacks = 0;
  std::size_t clips = 0;

  void add(const PointwiseOutcome& o) {
    fallbacks += o.fallback ? 1 : 0;
    clips += o.clipped ? 1 : 0;
  }
};

// Minimises a f^2 + b f + w pi(f) with pi the penalty integrand at f_init.
PointwiseOutcome minimize_pointwise(double a, double b, double w, PenaltyKind kind, double f_init) {
  auto phi = [&](double f) { return a * f * f + b * f + w * penalty_integrand(kind, f, f_init); };
  const double lo = kind == PenaltyKind::kl_log ? std::max(kKlFloor, f_init - kGuardRadius)
                                                : f_init - kGuardRadius;
  const double hi = f_init + kGuardRadius;

  std::optional<double> candidate;
  if (kind == PenaltyKind::quadratic) {
    if (a + w > 0.0) candidate = (2.0 * w * f_init - b) / (2.0 * (a + w));
  } else {
    // Stationarity 2a f^2 + b f - w f_init = 0; keep the root with positive curvature.
    const double c0 = -w * f_init;
    std::vector<double> roots;
    if (a == 0.0) {
      if (b != 0.0) roots.push_back(-c0 / b);
    } else {
      const double disc = b * b - 8.0 * a * c0;
      if (disc >= 0.0) {
        const double qr = -0.5 * (b + std::copysign(std::sqrt(disc), b));
        if (qr != 0.0) {
          roots.push_back(qr / (2.0 * a));
          roots.push_back(c0 / qr);
        }
      }
    }
    for (double r : roots) {
      if (r > 0.0 && 2.0 * a + w * f_init / (r * r) > 0.0) {
        if (!candidate || phi(r) < phi(*candidate)) candidate = r;
      }
    }
  }
  if (kind == PenaltyKind::kl_log && candidate && *candidate < kKlFloor) {
    return {kKlFloor, false, true};
  }
  if (candidate && *candidate >= lo && *candidate <= hi &&
      (kind == PenaltyKind::quadratic || (phi(*candidate) <= phi(lo) && phi(*candidate) <= phi(hi)))) {
    return {*candidate, false};
  }
  const auto [x, fx] = boost::math::tools::brent_find_minima(phi, lo, hi, 52);
  double best = x, best_val = fx;
  for (double edge : {lo, hi}) {
    if (phi(edge) < best_val) {
      best = edge;
      best_val = phi(edge);
    }
  }
  return {best, true, kind == PenaltyKind::kl_log && best == kKlFloor};
}

double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double relative_change(std::span<const double> next, std::span<const double> prev) {
  double d = 0.0;
  for (std::size_t k = 0; k < next.size(); ++k) d = std::max(d, std::abs(next[k] - prev[k]));
  const double scale = std::max(sup_norm(prev), sup_norm(next));
  return scale > 0.0 ? d / scale : d;
}

void require_setup(const ModelParams& p, const PenaltySpec& spec, const Pattern& f0) {
  require_simplified(p);
  validate_penalty(spec);
  if (!(spec.f_init.grid() == f0.grid())) throw DomainError("f0 and f_init use different grids");
  if (std::abs(f0.grid().horizon() - p.horizon_T) > 1e-12 * p.horizon_T) {
    throw DomainError("pattern grid horizon differs from horizon_T");
  }
  if (spec.kind == PenaltyKind::kl_log) {
    for (double v : f0.values()) {
      if (!(v > 0.0)) throw DomainError("kl_log optimisation needs a strictly positive f0");
    }
  }
}

RedResult finish(RedMethod method, const ModelParams& p, const PenaltySpec& spec, Pattern f,
                 std::size_t iterations, bool converged, std::vector<double> history,
                 std::vector<std::string> warnings) {
  const RedEvaluation e = evaluate_red(f, p, spec);
  return RedResult{.f_hat = std::move(f),
                   .objective = e.objective,
                   .expected_log_L = e.expected_log_L,
                   .penalty = e.penalty,
                   .method = method,
                   .iterations = iterations,
                   .converged = converged,
                   .history = std::move(history),
                   .params = p,
                   .penalty_kind = spec.kind,
                   .lambda_reg = spec.lambda_reg,
                   .warnings = std::move(warnings)};
}

// Shared driver of FPI and FBS: `pointwise` fills the target pattern from the
// forward state at the current iterate.
template <class Pointwise>
RedResult sweep(RedMethod method, const ModelParams& p, const PenaltySpec& spec, const Pattern& f0,
                const SweepOptions& options, Pointwise pointwise) {
  require_setup(p, spec, f0);
  if (!(options.relaxation > 0.0 && options.relaxation <= 1.0)) {
    throw DomainError("damping / relaxation must lie in (0, 1]");
  }
  const TimeGrid& grid = f0.grid();
  std::vector<double> f(f0.values().begin(), f0.values().end());
  std::vector<double> target(grid.size()), next(grid.size());
  std::vector<double> history;
  std::vector<std::string> warnings;
  PointwiseCounts counts;
  bool converged = false;
  std::size_t it = 0;
  for (; it < options.max_iter; ++it) {
    const Pattern current(grid, f, "f_c");
    const ForwardState state = solve_forward(current, p);
    history.push_back(evaluate_from(state, current, p, spec).objective);
    pointwise(state, current, target, counts);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      next[k] = (1.0 - options.relaxation) * f[k] + options.relaxation * target[k];
    }
    const double change = relative_change(next, f);
    f.swap(next);
    if (change <= options.tol) {
      converged = true;
      ++it;
      break;
    }
  }
  Pattern f_hat(grid, std::move(f), fmt::format("f_hat[{}]", to_string(method)));
  history.push_back(red_objective(f_hat, p, spec));
  if (counts.fallbacks > 0) {
    warnings.push_back(fmt::format(
        "bounded scalar search replaced the closed-form pointwise minimiser {} times",
        counts.fallbacks));
  }
  if (counts.clips > 0) {
    warnings.push_back(
        fmt::format("kl_log pointwise minimiser clipped at {} {} times", kKlFloor, counts.clips));
  }
  return finish(method, p, spec, std::move(f_hat), it, converged, std::move(history),
                std::move(warnings));
}

}  // namespace

RedEvaluation evaluate_red(const Pattern& f_c, const ModelParams& p, const PenaltySpec& spec) {
  require_simplified(p);
  validate_penalty(spec);
  return evaluate_from(solve_forward(f_c, p), f_c, p, spec);
}

double red_objective(const Pattern& f_c, const ModelParams& p, const PenaltySpec& spec) {
  return evaluate_red(f_c, p, spec).objective;
}

std::vector<double> red_gradient(const Pattern& f_c, const ModelParams& p, const PenaltySpec& spec) {
  require_simplified(p);
  validate_penalty(spec);
  if (!(spec.f_init.grid() == f_c.grid())) throw DomainError("penalty: f_init grid differs from f_c grid");
  Sensitivity s = log_l_sensitivity(solve_forward(f_c, p), f_c, p);
  const double weight = spec.lambda_reg / (p.sigma_W * p.sigma_W);
  const TimeGrid& grid = f_c.grid();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    s.grad[k] += weight * grid.trapezoid_weight(k) *
                 penalty_derivative(spec.kind, f_c[k], spec.f_init[k]);
  }
  return std::move(s.grad);
}

RedResult optimize_fpi(const ModelParams& p, const PenaltySpec& spec, const Pattern& f0,
                       const SweepOptions& options) {
  const double s2 = p.sigma_W * p.sigma_W;
  const double k_gain = p.misdirection_gain();
  const double w = spec.lambda_reg / s2;
  return sweep(RedMethod::fpi, p, spec, f0, options,
               [&](const ForwardState& s, const Pattern&, std::vector<double>& target,
                   PointwiseCounts& counts) {
                 const auto eta = s.coeffs.eta(), rho = s.coeffs.rho();
                 const auto h11 = s.moments.h11(), h02 = s.moments.h02();
                 for (std::size_t k = 0; k < target.size(); ++k) {
                   const double a = (k_gain - 0.5) * h02[k] / s2;
                   const double b = (-eta[k] * h11[k] - rho[k] * h02[k]) / (p.r_beta * s2);
                   const PointwiseOutcome o = minimize_pointwise(a, b, w, spec.kind, spec.f_init[k]);
                   target[k] = o.f;
                   counts.add(o);
                 }
               });
}

RedResult optimize_fbs(const ModelParams& p, const PenaltySpec& spec, const Pattern& f0,
                       const SweepOptions& options) {
  const double s2 = p.sigma_W * p.sigma_W;
  const Constants c = constants_of(p);
  const double w = spec.lambda_reg / s2;
  return sweep(RedMethod::fbs, p, spec, f0, options,
               [&](const ForwardState& s, const Pattern& current, std::vector<double>& target,
                   PointwiseCounts& counts) {
                 const TimeGrid& grid = current.grid();
                 const Sensitivity sens = log_l_sensitivity(s, current, p);
                 const auto h02 = s.moments.h02();
                 for (std::size_t k = 0; k < target.size(); ++k) {
                   // Hamiltonian per unit quadrature weight, expanded about the
                   // current sample: A (f - f_k)^2 + g (f - f_k) + w pi(f).
                   const double wk = grid.trapezoid_weight(k);
                   const double A =
                       (c.k - 0.5) * h02[k] / s2 - grid.dt() / wk * c.q * sens.rho_bar[k];
                   const double g = sens.grad[k] / wk;
                   const double fk = current[k];
                   const PointwiseOutcome o =
                       minimize_pointwise(A, g - 2.0 * A * fk, w, spec.kind, spec.f_init[k]);
                   target[k] = o.f;
                   counts.add(o);
                 }
               });
}

std::size_t Basis::dimension() const noexcept {
  return kind == Kind::polynomial ? order + 1 : 2 * order + 1;
}

std::vector<double> Basis::sample(std::size_t j, const TimeGrid& grid) const {
  if (j >= dimension()) throw DomainError("basis index out of range");
  const double T = grid.horizon();
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid.time(k);
    if (kind == Kind::polynomial) {
      out[k] = std::legendre(static_cast<unsigned>(j), 2.0 * t / T - 1.0);
    } else if (j == 0) {
      out[k] = 1.0;
    } else {
      const double arg = 2.0 * std::numbers::pi * static_cast<double>((j + 1) / 2) * t / T;
      out[k] = j % 2 == 1 ? std::cos(arg) : std::sin(arg);
    }
  }
  return out;
}

Pattern Basis::synthesize(std::span<const double> coeffs, const TimeGrid& grid) const {
  if (coeffs.size() != dimension()) throw DomainError("coefficient count differs from basis dimension");
  std::vector<double> values(grid.size(), 0.0);
  for (std::size_t j = 0; j < coeffs.size(); ++j) {
    const std::vector<double> phi = sample(j, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) values[k] += coeffs[j] * phi[k];
  }
  return Pattern(grid, std::move(values), "f_c");
}

namespace {

Eigen::MatrixXd basis_matrix(const Basis& basis, const TimeGrid& grid) {
  Eigen::MatrixXd phi(grid.size(), basis.dimension());
  for (std::size_t j = 0; j < basis.dimension(); ++j) {
    const std::vector<double> col = basis.sample(j, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) phi(k, j) = col[k];
  }
  return phi;
}

Eigen::VectorXd trapezoid_weights(const TimeGrid& grid) {
  Eigen::VectorXd w(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) w(k) = grid.trapezoid_weight(k);
  return w;
}

void require_basis(const Basis& basis) {
  if (basis.dimension() > kMaxBasisDimension) {
    throw DomainError(fmt::format("basis dimension {} exceeds {}", basis.dimension(),
                                  kMaxBasisDimension));
  }
}

}  // namespace

std::vector<double> project_onto_basis(const Basis& basis, const Pattern& f) {
  require_basis(basis);
  const TimeGrid& grid = f.grid();
  const Eigen::MatrixXd phi = basis_matrix(basis, grid);
  const Eigen::VectorXd sw = trapezoid_weights(grid).cwiseSqrt();
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(f.values().data(),
                                                              static_cast<Eigen::Index>(f.size()));
  const Eigen::VectorXd c =
      (sw.asDiagonal() * phi).colPivHouseholderQr().solve(sw.cwiseProduct(y));
  return {c.data(), c.data() + c.size()};
}

RedResult optimize_param_gd(const ModelParams& p, const PenaltySpec& spec, const Basis& basis,
                            std::span<const double> init_coeffs,
                            const GradientDescentOptions& options) {
  require_basis(basis);
  const TimeGrid& grid = spec.f_init.grid();
  if (init_coeffs.size() != basis.dimension()) {
    throw DomainError("initial coefficient count differs from basis dimension");
  }
  if (!(options.step > 0.0)) throw DomainError("gradient descent step must be > 0");
  require_setup(p, spec, basis.synthesize(init_coeffs, grid));

  const std::size_t dim = basis.dimension();
  const Eigen::MatrixXd phi = basis_matrix(basis, grid);
  const Eigen::MatrixXd gram = phi.transpose() * trapezoid_weights(grid).asDiagonal() * phi;
  const Eigen::LDLT<Eigen::MatrixXd> gram_solver(gram);

  auto objective = [&](const Eigen::VectorXd& c) {
    const Eigen::VectorXd v = phi * c;
    if (spec.kind == PenaltyKind::kl_log && v.minCoeff() <= 0.0) {
      return std::numeric_limits<double>::infinity();
    }
    return red_objective(Pattern(grid, {v.data(), v.data() + v.size()}), p, spec);
  };

  Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(init_coeffs.data(),
                                                        static_cast<Eigen::Index>(dim));
  double J = objective(c);
  std::vector<double> history{J};
  const double min_step = options.step * 1e-12;
  double step = options.step;
  bool converged = false;
  std::size_t it = 0;
  for (; it < options.max_iter; ++it) {
    Eigen::VectorXd grad(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      const double eps = 1e-6 * std::max(1.0, std::abs(c(j)));
      Eigen::VectorXd cp = c, cm = c;
      cp(j) += eps;
      cm(j) -= eps;
      grad(j) = (objective(cp) - objective(cm)) / (2.0 * eps);
    }
    const Eigen::VectorXd direction = -gram_solver.solve(grad);
    const double scale = std::max((phi * c).cwiseAbs().maxCoeff(), 1e-300);

    bool accepted = false;
    bool first_try = true;
    while (step >= min_step) {
      const Eigen::VectorXd trial = c + step * direction;
      const double J_trial = objective(trial);
      if (J_trial < J) {
        const double change = (phi * (step * direction)).cwiseAbs().maxCoeff() /
                              std::max(scale, (phi * trial).cwiseAbs().maxCoeff());
        c = trial;
        J = J_trial;
        history.push_back(J);
        accepted = true;
        converged = change <= options.tol;
        if (first_try) step *= 2.0;
        break;
      }
      // A step too short to move the pattern means the descent has stalled at tol.
      if ((phi * (step * direction)).cwiseAbs().maxCoeff() <= options.tol * scale) {
        converged = true;
        break;
      }
      step *= 0.5;
      first_try = false;
    }
    if (!accepted || converged) {
      ++it;
      break;
    }
  }
  std::vector<std::string> warnings;
  if (step < min_step && !converged) warnings.emplace_back("step underflow before reaching tol");
  const Eigen::VectorXd v = phi * c;
  Pattern f_hat(grid, {v.data(), v.data() + v.size()}, "f_hat[gd]");
  return finish(RedMethod::gd, p, spec, std::move(f_hat), it, converged, std::move(history),
                std::move(warnings));
}

bool ConsistencyReport::any_flagged() const noexcept {
  return std::any_of(pairs.begin(), pairs.end(), [](const PairGap& g) { return g.flagged; });
}

ConsistencyReport cross_validate(std::span<const RedResult> results, double threshold) {
  if (results.size() < 2) throw DomainError("cross_validate needs at least two results");
  const RedResult& ref = results.front();
  for (const RedResult& r : results) {
    if (!(r.params == ref.params) || r.penalty_kind != ref.penalty_kind ||
        r.lambda_reg != ref.lambda_reg || !(r.f_hat.grid() == ref.f_hat.grid())) {
      throw DomainError("cross_validate: results come from different configurations");
    }
  }
  ConsistencyReport report;
  report.threshold = threshold;
  for (std::size_t a = 0; a < results.size(); ++a) {
    for (std::size_t b = a + 1; b < results.size(); ++b) {
      const auto fa = results[a].f_hat.values(), fb = results[b].f_hat.values();
      PairGap g{.a = a, .b = b};
      g.pattern_gap = relative_change(fa, fb);
      const double ja = results[a].objective, jb = results[b].objective;
      const double jscale = std::max(std::abs(ja), std::abs(jb));
      g.objective_gap = jscale > 0.0 ? std::abs(ja - jb) / jscale : 0.0;
      g.flagged = g.pattern_gap > threshold || g.objective_gap > threshold;
      report.pairs.push_back(g);
    }
  }
  return report;
}

void write_f_hat_csv(std::ostream& out, const RedResult& r) {
  CsvWriter csv(out, {"t", "f_hat"});
  const TimeGrid& g = r.f_hat.grid();
  for (std::size_t k = 0; k < g.size(); ++k) csv.row({g.time(k), r.f_hat[k]});
}

}  // namespace deception_lq
