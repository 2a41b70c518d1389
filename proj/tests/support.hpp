#pragma once

#include <cmath>
#include <numbers>

#include "deception_lq/controls.hpp"
#include "deception_lq/model.hpp"

namespace test_support {

using namespace deception_lq;

/// Blue-team experiment constants (T = 1, V0 = 2, Y0 = 4, vbar(t) = 2 - t).
inline ModelParams blue_params(double lambda) {
  ModelParams p;
  p.horizon_T = 1.0;
  p.sigma_B = p.sigma_W = 0.25;
  p.r_alpha = 1.0;
  p.r_beta = 10.0;
  p.r_v = 1.0;
  p.t_v = 1.0;
  p.vbar_T = 1.0;
  p.lambda = lambda;
  p.v0 = 2.0;
  p.y0 = 4.0;
  return p;
}

/// Red-team experiment constants (T = 0.1, sigma = 0.1, V0 = 1, Y0 = 2, vbar = 0).
inline ModelParams red_params(double lambda) {
  ModelParams p;
  p.horizon_T = 0.1;
  p.sigma_B = p.sigma_W = 0.1;
  p.r_alpha = 1.0;
  p.r_beta = 10.0;
  p.r_v = 1.0;
  p.t_v = 1.0;
  p.vbar_T = 0.0;
  p.lambda = lambda;
  p.v0 = 1.0;
  p.y0 = 2.0;
  return p;
}

inline Pattern constant(const TimeGrid& g, double c) {
  return make_pattern(pattern_kind::Constant{c}, g);
}

inline Pattern sinusoid(const TimeGrid& g, double amp, double omega = 10.0 * std::numbers::pi) {
  return make_pattern(pattern_kind::Sinusoid{amp, omega}, g);
}

inline Pattern blue_vbar(const TimeGrid& g) {
  return make_pattern(pattern_kind::Affine{2.0, -1.0}, g);
}

inline ControlLaw blue_law(double lambda, const Pattern& f_c) {
  const TimeGrid& g = f_c.grid();
  return ControlLaw::solve(blue_params(lambda), f_c, constant(g, 0.0), blue_vbar(g));
}

inline ControlLaw red_law(double lambda, const Pattern& f_c) {
  const TimeGrid& g = f_c.grid();
  return ControlLaw::solve(red_params(lambda), f_c, constant(g, 0.0), constant(g, 0.0));
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace test_support
