#include <doctest.h>

#include <cmath>
#include <sstream>

#include "deception_lq/errors.hpp"
#include "deception_lq/monte_carlo.hpp"
#include "deception_lq/numerics.hpp"
#include "deception_lq/sht.hpp"
#include "support.hpp"

using namespace deception_lq;
using namespace test_support;

namespace {

RiccatiCoeffs red_coeffs(const ModelParams& p, const Pattern& fc) {
  const Pattern zero = constant(fc.grid(), 0.0);
  return solve_backward(p, fc, zero, zero, fc.grid());
}

}  // namespace

TEST_SUITE("sht") {
  TEST_CASE("null patterns give a null statistic") {
    const TimeGrid g(1.0, 200);
    const Pattern zero = constant(g, 0.0);
    const ControlLaw law = blue_law(0.075, zero);
    const PathEnsemble e = simulate_paths(law, 100, 2);
    for (std::size_t i = 0; i < e.n_paths(); ++i) {
      CHECK(log_likelihood_path(e.path(i), g, zero, zero, law.params()) == 0.0);
    }
    const ExpectedLogL l = expected_log_L_mc(e, zero, zero, law.params());
    CHECK(l.pathwise.mean == 0.0);
    CHECK(l.pathwise.std_error == 0.0);
    CHECK(l.drift_form.mean == 0.0);

    const ModelParams p = red_params(0.075);
    const TimeGrid gr(0.1, 100);
    const Pattern zr = constant(gr, 0.0);
    const RiccatiCoeffs c = red_coeffs(p, zr);
    CHECK(expected_log_L_analytic(solve_moments(p, c, zr, gr), c, zr, p) == 0.0);
  }

  TEST_CASE("noise-free path: statistic equals direct quadrature") {
    const TimeGrid g(1.0, 500);
    const Pattern fc = sinusoid(g, 0.5), fd = constant(g, 0.3);
    const ControlLaw law = ControlLaw::solve(blue_params(0.05), fc, fd, blue_vbar(g));
    const ModelParams& p = law.params();
    const PathEnsemble e = simulate_paths(law, 1, 0, {.noise = false});
    const PathView path = e.path(0);
    double left = 0.0, trap = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double gk = fc[k] * path.Y[k] + fd[k];
      const double f = (gk * path.beta[k] - 0.5 * gk * gk) / (p.sigma_W * p.sigma_W);
      if (k < g.n_steps()) left += f * g.dt();
      trap += f * ((k == 0 || k == g.n_steps()) ? 0.5 * g.dt() : g.dt());
    }
    CHECK(log_likelihood_path(path, g, fc, fd, p) == doctest::Approx(left).epsilon(1e-11));
    CHECK(log_likelihood_drift_path(path, g, fc, fd, p) == doctest::Approx(trap).epsilon(1e-12));
  }

  TEST_CASE("pathwise and drift estimators agree within 3 combined stderr") {
    const TimeGrid g(1.0, 1000);
    for (double lambda : {0.0, 0.05}) {
      const ControlLaw law = blue_law(lambda, sinusoid(g, 1.0));
      const MonteCarloSummary s = run_monte_carlo(law, {.n_paths = 2000, .seed = 31});
      CHECK(s.log_likelihood.consistent(3.0));
      const PathEnsemble e = simulate_paths(law, 500, 31);
      const ExpectedLogL l = expected_log_L_mc(e, law.f_c(), law.f_d(), law.params());
      CHECK(l.consistent(3.0));
    }
  }

  TEST_CASE("grid mismatch is rejected") {
    const TimeGrid g(1.0, 100), h(1.0, 50);
    const PathEnsemble e = simulate_paths(blue_law(0.05, sinusoid(g, 0.5)), 1, 0);
    CHECK_THROWS_AS(
        log_likelihood_path(e.path(0), g, constant(h, 1.0), constant(h, 0.0), blue_params(0.05)),
        DomainError);
  }

  TEST_CASE("moment initial values") {
    const ModelParams p = red_params(0.075);
    const TimeGrid g(0.1, 1000);
    const Pattern fc = constant(g, 1.0);
    const MomentTrajectories m = solve_moments(p, red_coeffs(p, fc), fc, g);
    CHECK(m.h20()[0] == 1.0);
    CHECK(m.h11()[0] == 2.0);
    CHECK(m.h02()[0] == 4.0);
    CHECK_FALSE(check_moment_invariants(m).has_value());
  }

  TEST_CASE("drift-only moments with zeroed coefficients") {
    ModelParams p = red_params(0.0);
    p.sigma_B = p.sigma_W = 0.0;
    const TimeGrid g(0.1, 1000);
    std::array<std::vector<double>, 6> zeros;
    zeros.fill(std::vector<double>(g.size(), 0.0));
    const RiccatiCoeffs c(g, zeros);
    const MomentTrajectories m = solve_moments(p, c, constant(g, 0.0), g);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double y = p.y0 + p.v0 * g.time(k);
      CHECK(m.h20()[k] == 1.0);
      CHECK(m.h02()[k] == doctest::Approx(y * y).epsilon(1e-13));
      CHECK(m.h11()[k] == doctest::Approx(p.v0 * y).epsilon(1e-13));
    }
  }

  TEST_CASE("moments outside the simplified setting are rejected") {
    const ModelParams p = blue_params(0.05);
    const TimeGrid g(1.0, 100);
    const Pattern fc = constant(g, 1.0);
    const RiccatiCoeffs c = solve_backward(p, fc, constant(g, 0.0), blue_vbar(g), g);
    CHECK_THROWS_AS(solve_moments(p, c, fc, g), DomainError);
  }

  TEST_CASE("terminal moments match Monte Carlo sample moments") {
    const ModelParams p = red_params(0.075);
    const TimeGrid g(0.1, 1000);
    const Pattern fc = constant(g, 1.0);
    const ControlLaw law = red_law(0.075, fc);
    const MomentTrajectories m = solve_moments(p, law.coeffs(), fc, g);
    const TerminalMoments mc =
        terminal_moments(run_monte_carlo(law, {.n_paths = 20000, .seed = 5}));
    const std::size_t n = g.n_steps();
    CHECK(std::abs(m.h20()[n] - mc.h20.mean) <= 3.0 * mc.h20.std_error);
    CHECK(std::abs(m.h11()[n] - mc.h11.mean) <= 3.0 * mc.h11.std_error);
    CHECK(std::abs(m.h02()[n] - mc.h02.mean) <= 3.0 * mc.h02.std_error);
  }

  TEST_CASE("analytic expectation matches Monte Carlo") {
    const TimeGrid g(0.1, 1000);
    for (const Pattern& fc : {constant(g, 1.0), sinusoid(g, 0.5)}) {
      const ControlLaw law = red_law(0.05, fc);
      const ModelParams& p = law.params();
      const double analytic =
          expected_log_L_analytic(solve_moments(p, law.coeffs(), fc, g), law.coeffs(), fc, p);
      const MonteCarloSummary s = run_monte_carlo(law, {.n_paths = 5000, .seed = 17});
      const CostEstimate& mc = s.log_likelihood.drift_form;
      CHECK(std::abs(analytic - mc.mean) <= 3.0 * mc.std_error + 1e-9);
    }
  }

  TEST_CASE("baseline expectation at lambda = r_beta sigma_W^2") {
    const TimeGrid g(0.1, 1000);
    const Pattern fc = constant(g, 1.0);
    const ControlLaw law = red_law(0.1, fc);
    const ModelParams& p = law.params();
    const double v =
        expected_log_L_analytic(solve_moments(p, law.coeffs(), fc, g), law.coeffs(), fc, p);
    CHECK(v == doctest::Approx(23.21).epsilon(0.05));
  }

  TEST_CASE("sign of the quadratic coefficient") {
    const double h02 = 3.0;
    for (double lambda : {0.0, 0.02, 0.049, 0.05, 0.051, 0.08, 0.1}) {
      const ModelParams p = red_params(lambda);
      const double coef = fc_squared_coefficient(p, h02);
      const bool predicted_negative = lambda < p.lambda_bound() / 2.0;
      CHECK((coef < 0.0) == predicted_negative);
    }
  }

  TEST_CASE("invariant checker flags violations") {
    const TimeGrid g(1.0, 1);
    CHECK(check_moment_invariants(MomentTrajectories(g, {1.0, 1.0}, {1.0, 3.0}, {1.0, 1.0}))
              ->find("Cauchy") != std::string::npos);
    CHECK(check_moment_invariants(MomentTrajectories(g, {1.0, -1.0}, {0.0, 0.0}, {1.0, 1.0}))
              .has_value());
  }

  TEST_CASE("moment csv") {
    const TimeGrid g(1.0, 3);
    std::ostringstream out;
    write_csv(out, MomentTrajectories(g, {1, 2, 3, 4}, {0, 0, 0, 0}, {5, 6, 7, 8}));
    CHECK(out.str() ==
          "t,h20,h11,h02\n0,1,0,5\n0.33333333333333331,2,0,6\n0.66666666666666663,3,0,7\n1,4,0,8\n");
  }
}
