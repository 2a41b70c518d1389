#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "deception_lq/errors.hpp"
#include "deception_lq/redopt.hpp"
#include "support.hpp"

using namespace deception_lq;
using namespace test_support;

namespace {

const TimeGrid kGrid(0.1, 1000);

PenaltySpec penalty(PenaltyKind kind, double lambda_reg) {
  return {kind, constant(kGrid, 1.0), lambda_reg};
}

// Golden-section search for a unimodal scalar function on [a, b].
template <class F>
double golden_section(F f, double a, double b, double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double l2_distance(const Pattern& f, const Pattern& g) {
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    s += f.grid().trapezoid_weight(k) * (f[k] - g[k]) * (f[k] - g[k]);
  }
  return std::sqrt(s);
}

double sup_gap(const Pattern& f, const Pattern& g) {
  double d = 0.0, s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    d = std::max(d, std::abs(f[k] - g[k]));
    s = std::max({s, std::abs(f[k]), std::abs(g[k])});
  }
  return d / s;
}

void check_recomposition(const RedResult& r) {
  const double s2 = r.params.sigma_W * r.params.sigma_W;
  const double recomposed = r.expected_log_L + r.lambda_reg / s2 * r.penalty;
  CHECK(std::abs(r.objective - recomposed) <= 1e-10 * std::max(1.0, std::abs(r.objective)));
  if (r.converged) {
    REQUIRE(r.history.size() >= 2);
  }
}

}  // namespace

TEST_SUITE("redopt") {
  TEST_CASE("penalty values") {
    const Pattern one = constant(kGrid, 1.0);
    CHECK(penalty_value(one, penalty(PenaltyKind::quadratic, 1.0)) == 0.0);
    CHECK(penalty_value(one, penalty(PenaltyKind::kl_log, 1.0)) == 0.0);
    CHECK(penalty_value(constant(kGrid, 0.0), penalty(PenaltyKind::quadratic, 1.0)) ==
          doctest::Approx(0.1).epsilon(1e-12));
    CHECK(penalty_value(constant(kGrid, std::exp(-1.0)), penalty(PenaltyKind::kl_log, 1.0)) ==
          doctest::Approx(0.1).epsilon(1e-12));
    CHECK_THROWS_AS(penalty_value(constant(kGrid, 0.0), penalty(PenaltyKind::kl_log, 1.0)),
                    DomainError);
  }

  TEST_CASE("penalty spec validation") {
    CHECK_THROWS_AS(validate_penalty(penalty(PenaltyKind::quadratic, -1.0)), DomainError);
    CHECK_THROWS_AS(validate_penalty({PenaltyKind::kl_log, constant(kGrid, 0.0), 1.0}), DomainError);
    CHECK_NOTHROW(validate_penalty({PenaltyKind::quadratic, constant(kGrid, 0.0), 0.0}));
  }

  TEST_CASE("null pattern without regularisation has zero objective") {
    const RedEvaluation e =
        evaluate_red(constant(kGrid, 0.0), red_params(0.1), penalty(PenaltyKind::quadratic, 0.0));
    CHECK(e.objective == 0.0);
    CHECK(e.expected_log_L == 0.0);
  }

  TEST_CASE("baseline expectation is independent of the penalty") {
    const Pattern one = constant(kGrid, 1.0);
    for (auto kind : {PenaltyKind::quadratic, PenaltyKind::kl_log}) {
      const RedEvaluation e = evaluate_red(one, red_params(0.1), penalty(kind, 0.7));
      CHECK(e.expected_log_L == doctest::Approx(23.21).epsilon(0.05));
      CHECK(e.penalty == 0.0);
    }
  }

  TEST_CASE("simplified setting is enforced") {
    ModelParams p = red_params(0.1);
    p.vbar_T = 1.0;
    CHECK_THROWS_AS(red_objective(constant(kGrid, 1.0), p, penalty(PenaltyKind::quadratic, 0.1)),
                    DomainError);
    CHECK_THROWS_AS(red_objective(constant(kGrid, 1.0), red_params(0.5),
                                  penalty(PenaltyKind::quadratic, 0.1)),
                    InvalidParams);
  }

  TEST_CASE("central differences converge quadratically along a random bump") {
    const ModelParams p = red_params(0.075);
    const PenaltySpec spec = penalty(PenaltyKind::kl_log, 0.3);
    std::mt19937_64 gen(4);
    std::normal_distribution<double> n01;
    std::vector<double> f(kGrid.size()), delta(kGrid.size());
    for (std::size_t k = 0; k < kGrid.size(); ++k) {
      f[k] = 1.0 + 0.3 * std::sin(200.0 * kGrid.time(k));
      delta[k] = std::exp(-std::pow((kGrid.time(k) - 0.04) / 0.01, 2)) * (1.0 + 0.1 * n01(gen));
    }
    auto J = [&](double e) {
      std::vector<double> v(f);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] += e * delta[k];
      return red_objective(Pattern(kGrid, v), p, spec);
    };
    const std::vector<double> grad = red_gradient(Pattern(kGrid, f), p, spec);
    double exact = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) exact += grad[k] * delta[k];
    const double J0 = J(0.0);
    double prev_central = 0.0, prev_secant = 0.0;
    for (double eps : {4e-2, 2e-2, 1e-2}) {
      const double central = std::abs((J(eps) - J(-eps)) / (2.0 * eps) - exact);
      const double secant = std::abs((J(eps) - J0) / eps - exact);
      if (prev_central > 0.0) {
        CHECK(prev_central / central == doctest::Approx(4.0).epsilon(0.1));
        CHECK(prev_secant / secant == doctest::Approx(2.0).epsilon(0.1));
      }
      prev_central = central;
      prev_secant = secant;
    }
  }

  TEST_CASE("adjoint gradient matches nodal central differences") {
    for (double lambda : {0.05, 0.075, 0.1}) {
      for (auto kind : {PenaltyKind::quadratic, PenaltyKind::kl_log}) {
        const ModelParams p = red_params(lambda);
        const PenaltySpec spec = penalty(kind, 0.3);
        std::vector<double> f(kGrid.size());
        for (std::size_t k = 0; k < f.size(); ++k) f[k] = 1.0 + 0.3 * std::sin(200.0 * kGrid.time(k));
        const std::vector<double> grad = red_gradient(Pattern(kGrid, f), p, spec);
        for (std::size_t k : {0u, 1u, 250u, 777u, 999u, 1000u}) {
          const double e = 1e-4;
          std::vector<double> fp(f), fm(f);
          fp[k] += e;
          fm[k] -= e;
          const double fd = (red_objective(Pattern(kGrid, fp), p, spec) -
                             red_objective(Pattern(kGrid, fm), p, spec)) / (2.0 * e);
          CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("penalty dominance pins the optimum to f_init") {
    const Pattern one = constant(kGrid, 1.0);
    const ModelParams p = red_params(0.1);
    const PenaltySpec spec = penalty(PenaltyKind::quadratic, 1e6);
    for (const RedResult& r : {optimize_fpi(p, spec, one), optimize_fbs(p, spec, one)}) {
      CHECK(r.converged);
      double gap = 0.0;
      for (double v : r.f_hat.values()) gap = std::max(gap, std::abs(v - 1.0));
      CHECK(gap < 1e-3);
    }
  }

  TEST_CASE("fixed-point iteration reproduces the reported optima") {
    const Pattern one = constant(kGrid, 1.0);
    const ModelParams p = red_params(0.1);
    const RedResult kl = optimize_fpi(p, penalty(PenaltyKind::kl_log, 0.1), one);
    CHECK(kl.converged);
    CHECK(kl.expected_log_L == doctest::Approx(0.50).epsilon(0.10));
    const RedResult quad = optimize_fpi(p, penalty(PenaltyKind::quadratic, 1.0), one);
    CHECK(quad.converged);
    CHECK(quad.expected_log_L == doctest::Approx(2.17).epsilon(0.10));
    check_recomposition(kl);
    check_recomposition(quad);
  }

  TEST_CASE("forward-backward sweep agrees with FPI and is stationary") {
    const Pattern one = constant(kGrid, 1.0);
    const ModelParams p = red_params(0.1);
    const SweepOptions options;
    for (auto kind : {PenaltyKind::quadratic, PenaltyKind::kl_log}) {
      for (double lambda_reg : {0.1, 1.0}) {
        const PenaltySpec spec = penalty(kind, lambda_reg);
        const RedResult a = optimize_fpi(p, spec, one, options);
        const RedResult b = optimize_fbs(p, spec, one, options);
        CHECK(b.converged);
        CHECK(sup_gap(a.f_hat, b.f_hat) <= 0.05);
        CHECK(b.objective <= a.objective);
        check_recomposition(b);
        double worst = 0.0;
        for (std::size_t k : {0u, 100u, 500u, 900u, 1000u}) {
          const double e = 1e-5;
          std::vector<double> fp(b.f_hat.values().begin(), b.f_hat.values().end()), fm(fp);
          fp[k] += e;
          fm[k] -= e;
          worst = std::max(worst, std::abs(red_objective(Pattern(kGrid, fp), p, spec) -
                                           red_objective(Pattern(kGrid, fm), p, spec)) /
                                      (2.0 * e));
        }
        CHECK(worst <= 10.0 * options.tol);
      }
    }
  }

  TEST_CASE("constant basis recovers the golden-section minimiser") {
    const ModelParams p = red_params(0.1);
    const PenaltySpec spec = penalty(PenaltyKind::quadratic, 1.0);
    const Basis basis{Basis::Kind::polynomial, 0};
    const double init[] = {1.0};
    const RedResult r = optimize_param_gd(p, spec, basis, init);
    CHECK(r.converged);
    const double oracle = golden_section(
        [&](double c) { return red_objective(constant(kGrid, c), p, spec); }, -1.0, 2.0, 1e-8);
    CHECK(std::abs(r.f_hat[0] - oracle) <= 1e-4);
    CHECK(std::abs(r.f_hat[1000] - oracle) <= 1e-4);
  }

  TEST_CASE("descent is monotone without regularisation") {
    const ModelParams p = red_params(0.075);
    REQUIRE(p.lambda > p.lambda_bound() / 2.0);
    const PenaltySpec spec = penalty(PenaltyKind::quadratic, 0.0);
    const Basis basis{Basis::Kind::polynomial, 3};
    const RedResult r =
        optimize_param_gd(p, spec, basis, project_onto_basis(basis, constant(kGrid, 1.0)));
    REQUIRE(r.history.size() > 2);
    for (std::size_t i = 1; i + 1 < r.history.size(); ++i) CHECK(r.history[i] < r.history[i - 1]);
    CHECK(r.expected_log_L < r.history.front());
  }

  TEST_CASE("parametric descent agrees with the sweeps") {
    const Pattern one = constant(kGrid, 1.0);
    const ModelParams p = red_params(0.1);
    for (const Basis basis : {Basis{Basis::Kind::polynomial, 4}, Basis{Basis::Kind::fourier, 3}}) {
      const PenaltySpec spec = penalty(PenaltyKind::kl_log, 1.0);
      const RedResult gd = optimize_param_gd(p, spec, basis, project_onto_basis(basis, one));
      const RedResult fbs = optimize_fbs(p, spec, one);
      CHECK(gd.converged);
      CHECK(sup_gap(gd.f_hat, fbs.f_hat) <= 0.05);
      CHECK(std::abs(gd.objective - fbs.objective) <= 0.01 * std::abs(fbs.objective));
    }
  }

  TEST_CASE("trust-region monotonicity and leader improvement") {
    const Pattern one = constant(kGrid, 1.0);
    const ModelParams p = red_params(0.1);
    const double baseline = evaluate_red(one, p, penalty(PenaltyKind::quadratic, 0.0)).expected_log_L;
    for (auto kind : {PenaltyKind::quadratic, PenaltyKind::kl_log}) {
      const RedResult weak = optimize_fbs(p, penalty(kind, 0.1), one);
      const RedResult strong = optimize_fbs(p, penalty(kind, 1.0), one);
      CHECK(l2_distance(strong.f_hat, one) <= l2_distance(weak.f_hat, one));
      CHECK(strong.expected_log_L >= weak.expected_log_L);
      CHECK(weak.expected_log_L < baseline);
      CHECK(strong.expected_log_L < baseline);
    }
  }

  TEST_CASE("kl_log iterates stay positive and clipping is reported") {
    const Pattern one = constant(kGrid, 1.0);
    const RedResult r = optimize_fpi(red_params(0.1), penalty(PenaltyKind::kl_log, 1e-20), one);
    for (double v : r.f_hat.values()) CHECK(v > 0.0);
    REQUIRE_FALSE(r.warnings.empty());
    CHECK(r.warnings.back().find("clipped") != std::string::npos);
  }

  TEST_CASE("iteration cap yields an unconverged result, not an error") {
    const RedResult r = optimize_fpi(red_params(0.1), penalty(PenaltyKind::quadratic, 1.0),
                                     constant(kGrid, 1.0), {.tol = 1e-14, .max_iter = 3});
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 3);
    check_recomposition(r);
  }

  TEST_CASE("basis construction") {
    const Basis poly{Basis::Kind::polynomial, 3}, fourier{Basis::Kind::fourier, 2};
    CHECK(poly.dimension() == 4);
    CHECK(fourier.dimension() == 5);
    std::vector<double> values(kGrid.size());
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double t = kGrid.time(k);
      values[k] = 0.5 - 2.0 * t + 30.0 * t * t;
    }
    const std::vector<double> c = project_onto_basis(poly, Pattern(kGrid, values));
    const Pattern back = poly.synthesize(c, kGrid);
    for (std::size_t k = 0; k < values.size(); ++k) CHECK(back[k] == doctest::Approx(values[k]).epsilon(1e-10));
    CHECK(std::abs(c[3]) < 1e-10);
    CHECK_THROWS_AS(project_onto_basis(Basis{Basis::Kind::fourier, 8}, back), DomainError);
    CHECK(fourier.sample(1, kGrid)[0] == 1.0);
    CHECK(fourier.sample(2, kGrid)[250] == doctest::Approx(1.0));
  }

  TEST_CASE("cross validation") {
    const Pattern one = constant(kGrid, 1.0);
    const ModelParams p = red_params(0.1);
    const RedResult a = optimize_fpi(p, penalty(PenaltyKind::kl_log, 0.1), one);
    std::vector<RedResult> same{a, a};
    const ConsistencyReport r0 = cross_validate(same);
    REQUIRE(r0.pairs.size() == 1);
    CHECK(r0.pairs[0].pattern_gap == 0.0);
    CHECK(r0.pairs[0].objective_gap == 0.0);
    CHECK_FALSE(r0.any_flagged());

    RedResult corrupted = a;
    std::vector<double> doubled(a.f_hat.values().begin(), a.f_hat.values().end());
    for (double& v : doubled) v *= 2.0;
    corrupted.f_hat = Pattern(kGrid, doubled);
    std::vector<RedResult> bad{a, corrupted};
    CHECK(cross_validate(bad).any_flagged());

    const RedResult other = optimize_fpi(p, penalty(PenaltyKind::kl_log, 1.0), one);
    std::vector<RedResult> mixed{a, other};
    CHECK_THROWS_AS(cross_validate(mixed), DomainError);
    CHECK_THROWS_AS(cross_validate(std::span<const RedResult>(same).first(1)), DomainError);
  }

  TEST_CASE("f_hat csv") {
    const RedResult r = optimize_fpi(red_params(0.1), penalty(PenaltyKind::quadratic, 1.0),
                                     constant(kGrid, 1.0));
    std::ostringstream out;
    write_f_hat_csv(out, r);
    CHECK(out.str().rfind("t,f_hat\n0,", 0) == 0);
  }
}
