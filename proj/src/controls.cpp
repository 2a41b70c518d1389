#include "deception_lq/controls.hpp"

#include <fmt/format.h>

#include "deception_lq/errors.hpp"

namespace deception_lq {

namespace {

Controls feedback(const ModelParams& p, const RiccatiVector& x, double f_c, double f_d, double v,
                  double y) {
  const double k = p.misdirection_gain();
  Controls c;
  c.alpha = -(x[kMu] * v + x[kEta] * y + x[kGamma]) / p.r_alpha;
  c.beta = -x[kEta] / p.r_beta * v + (k * f_c - x[kRho] / p.r_beta) * y +
           (k * f_d - x[kTheta] / p.r_beta);
  return c;
}

double quadratic_form(const RiccatiVector& x, double v, double y) {
  return 0.5 * x[kMu] * v * v + x[kEta] * v * y + 0.5 * x[kRho] * y * y + x[kGamma] * v +
         x[kTheta] * y + x[kXi];
}

}  // namespace

ControlLaw::ControlLaw(const ModelParams& p, RiccatiCoeffs coeffs, Pattern f_c, Pattern f_d,
                       Pattern vbar)
    : params_(p),
      coeffs_(std::move(coeffs)),
      f_c_(std::move(f_c)),
      f_d_(std::move(f_d)),
      vbar_(std::move(vbar)) {}

ControlLaw ControlLaw::solve(const ModelParams& p, Pattern f_c, Pattern f_d, Pattern vbar) {
  validate_params(p);
  const TimeGrid grid = f_c.grid();
  if (grid.horizon() != p.horizon_T) {
    throw DomainError(fmt::format("pattern horizon {} differs from params.horizon_T {}",
                                  grid.horizon(), p.horizon_T));
  }
  RiccatiCoeffs coeffs = solve_backward(p, f_c, f_d, vbar, grid);
  return ControlLaw(p, std::move(coeffs), std::move(f_c), std::move(f_d), std::move(vbar));
}

double ControlLaw::alpha(double t, double v, double y) const {
  return feedback(params_, coeffs_.interpolate(t), 0.0, 0.0, v, y).alpha;
}

double ControlLaw::beta(double t, double v, double y) const {
  return feedback(params_, coeffs_.interpolate(t), f_c_.eval(t), f_d_.eval(t), v, y).beta;
}

double ControlLaw::value(double t, double v, double y) const {
  return quadratic_form(coeffs_.interpolate(t), v, y);
}

Controls ControlLaw::at_step(std::size_t k, double, double v, double y) const {
  return feedback(params_, coeffs_.at(k), f_c_[k], f_d_[k], v, y);
}

double alpha_hat(const ControlLaw& law, double t, double v, double y) { return law.alpha(t, v, y); }
double beta_hat(const ControlLaw& law, double t, double v, double y) { return law.beta(t, v, y); }
double value_function(const ControlLaw& law, double t, double v, double y) {
  return law.value(t, v, y);
}

double running_cost_r(const ModelParams& p, double vbar_t, double v, double, double alpha,
                      double beta) {
  const double dv = v - vbar_t;
  return 0.5 * p.r_alpha * alpha * alpha + 0.5 * p.r_beta * beta * beta + 0.5 * p.r_v * dv * dv;
}

double running_cost_r(const ModelParams& p, const Pattern& vbar, double t, double v, double y,
                      double alpha, double beta) {
  return running_cost_r(p, vbar.eval(t), v, y, alpha, beta);
}

double terminal_cost_g(const ModelParams& p, double v, double) {
  const double dv = v - p.vbar_T;
  return 0.5 * p.t_v * dv * dv;
}

double running_cost_h(const ModelParams& p, const PatternValues& f, double v, double y,
                      double alpha, double beta) {
  const double r = running_cost_r(p, f.vbar, v, y, alpha, beta);
  if (p.lambda == 0.0) return r;
  const double sw2 = p.sigma_W * p.sigma_W;
  const double g = f.f_c * y + f.f_d;
  return r - p.lambda / sw2 * g * beta + 0.5 * p.lambda / sw2 * g * g;
}

double running_cost_h(const ModelParams& p, const Pattern& f_c, const Pattern& f_d,
                      const Pattern& vbar, double t, double v, double y, double alpha,
                      double beta) {
  return running_cost_h(p, PatternValues{f_c.eval(t), f_d.eval(t), vbar.eval(t)}, v, y, alpha,
                        beta);
}

double hjb_integrand(const ControlLaw& law, double t, double v, double y, double alpha,
                     double beta) {
  const ModelParams& p = law.params();
  const RiccatiVector x = law.coeffs().interpolate(t);
  const PatternValues f{law.f_c().eval(t), law.f_d().eval(t), law.vbar().eval(t)};
  const double V_v = x[kMu] * v + x[kEta] * y + x[kGamma];
  const double V_y = x[kEta] * v + x[kRho] * y + x[kTheta];
  const double V_vv = x[kMu];
  const double V_yy = x[kRho];
  return alpha * V_v + (v + beta) * V_y + 0.5 * p.sigma_B * p.sigma_B * V_vv +
         0.5 * p.sigma_W * p.sigma_W * V_yy + running_cost_h(p, f, v, y, alpha, beta);
}

double hjb_residual(const ControlLaw& law, double t, double v, double y) {
  const RiccatiVector x = law.coeffs().interpolate(t);
  const PatternValues f{law.f_c().eval(t), law.f_d().eval(t), law.vbar().eval(t)};
  const RiccatiVector dx = riccati_rhs(law.params(), x, f);
  const double V_t = quadratic_form(dx, v, y);
  return V_t + hjb_integrand(law, t, v, y, law.alpha(t, v, y), law.beta(t, v, y));
}

}  // namespace deception_lq
