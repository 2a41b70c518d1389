#include <doctest.h>

#include <cmath>
#include <numbers>

#include "deception_lq/errors.hpp"
#include "deception_lq/model.hpp"
#include "deception_lq/numerics.hpp"
#include "support.hpp"

using namespace deception_lq;
using test_support::blue_params;
using test_support::red_params;

TEST_SUITE("model") {
  TEST_CASE("validate_params accepts the experiment parameter sets") {
    const ModelParams p = blue_params(0.075);
    CHECK(validate_params(p) == p);
    CHECK(p.lambda_bound() == doctest::Approx(0.625));
    CHECK_NOTHROW(validate_params(blue_params(0.0)));
    for (double lambda : {0.0, 0.05, 0.075, 0.1}) CHECK_NOTHROW(validate_params(red_params(lambda)));
  }

  TEST_CASE("validate_params names the violated invariant") {
    ModelParams p = blue_params(1.0);
    try {
      validate_params(p);
      FAIL("expected InvalidParams");
    } catch (const InvalidParams& e) {
      CHECK(e.violation().find("lambda exceeds r_beta") != std::string::npos);
    }
    p = blue_params(-0.1);
    CHECK_THROWS_AS(validate_params(p), InvalidParams);
    p = blue_params(0.0);
    p.sigma_W = 0.0;
    CHECK_THROWS_AS(validate_params(p), InvalidParams);
    p = blue_params(0.0);
    p.horizon_T = -1.0;
    CHECK_THROWS_AS(validate_params(p), InvalidParams);
    p = blue_params(0.0);
    p.v0 = std::nan("");
    CHECK_THROWS_AS(validate_params(p), InvalidParams);
  }

  TEST_CASE("upper boundary of lambda is admissible") {
    ModelParams p = red_params(0.0);
    p.lambda = p.lambda_bound();
    CHECK_NOTHROW(validate_params(p));
  }

  TEST_CASE("time grid endpoints and spacing") {
    const TimeGrid g(0.1, 1000);
    CHECK(g.time(0) == 0.0);
    CHECK(g.time(1000) == 0.1);
    CHECK(g.size() == 1001);
    const auto t = g.times();
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
      CHECK(t[k + 1] - t[k] == doctest::Approx(g.dt()).epsilon(1e-9));
    }
    CHECK_THROWS_AS(TimeGrid(1.0, 0), DomainError);
    CHECK_THROWS_AS(TimeGrid(0.0, 10), DomainError);
  }

  TEST_CASE("pattern evaluation") {
    const TimeGrid g(1.0, 2000);
    const Pattern c = make_pattern(pattern_kind::Constant{0.5}, g);
    for (double t : {0.0, 0.123456, 0.5, 1.0}) CHECK(pattern_eval(c, t) == 0.5);

    const TimeGrid coarse(2.0, 1);
    const Pattern lin(coarse, {0.0, 1.0});
    CHECK(pattern_eval(lin, 1.0) == doctest::Approx(0.5));

    const Pattern s = make_pattern(pattern_kind::Sinusoid{0.5, 10.0 * std::numbers::pi}, g);
    CHECK(pattern_eval(s, 0.05) == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(pattern_eval(c, -0.01), DomainError);
    CHECK_THROWS_AS(pattern_eval(c, 1.01), DomainError);
  }

  TEST_CASE("closed-form patterns are sampled bit-exactly") {
    const TimeGrid g(1.0, 2000);
    const double omega = 10.0 * std::numbers::pi;
    const Pattern s = make_pattern(pattern_kind::Sinusoid{0.5, omega}, g);
    const Pattern a = make_pattern(pattern_kind::Affine{2.0, -1.0}, g);
    const Pattern z = make_pattern(pattern_kind::Constant{0.0}, g);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double t = g.time(k);
      CHECK(s[k] == 0.5 * std::sin(omega * t));
      CHECK(a[k] == 2.0 + -1.0 * t);
      CHECK(z[k] == 0.0);
    }
    CHECK(a[0] == 2.0);
    CHECK(a[2000] == 1.0);
    CHECK(z.is_zero());
  }

  TEST_CASE("interpolation is Lipschitz with the largest sample slope") {
    const TimeGrid g(1.0, 200);
    const Pattern s = make_pattern(pattern_kind::Sinusoid{0.5, 10.0 * std::numbers::pi}, g);
    double slope = 0.0;
    for (std::size_t k = 0; k < g.n_steps(); ++k) {
      slope = std::max(slope, std::abs(s[k + 1] - s[k]) / g.dt());
    }
    for (int i = 0; i < 500; ++i) {
      const double t1 = 0.0019 * i;
      const double t2 = std::min(1.0, t1 + 0.0007);
      CHECK(std::abs(pattern_eval(s, t1) - pattern_eval(s, t2)) <= slope * (t2 - t1) + 1e-15);
    }
  }

  TEST_CASE("pattern rejects bad inputs") {
    const TimeGrid g(1.0, 10);
    CHECK_THROWS_AS(Pattern(g, std::vector<double>(5, 0.0)), DomainError);
    CHECK_THROWS_AS(make_pattern(pattern_kind::Constant{std::nan("")}, g), DomainError);
    CHECK_THROWS_AS(make_pattern(pattern_kind::Samples{{1.0, 2.0}}, g), DomainError);
  }

  TEST_CASE("describe gives readable labels") {
    CHECK(describe(pattern_kind::Constant{0.5}) == "constant(0.5)");
    CHECK(describe(pattern_kind::Affine{2.0, -1.0}).find("affine") == 0);
  }
}

TEST_SUITE("numerics") {
  TEST_CASE("pairwise sum matches exact integer sums") {
    std::vector<double> v(10007);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    CHECK(pairwise_sum(v) == 10006.0 * 10007.0 / 2.0);
    CHECK(pairwise_sum({}) == 0.0);
  }

  TEST_CASE("trapezoid integrates affine functions exactly") {
    const TimeGrid g(2.0, 7);
    std::vector<double> f(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) f[k] = 3.0 - 0.5 * g.time(k);
    CHECK(trapezoid(g, f) == doctest::Approx(3.0 * 2.0 - 0.25 * 4.0).epsilon(1e-14));
  }

  TEST_CASE("sample stats") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const SampleStats s = sample_stats(v);
    CHECK(s.mean == 2.5);
    CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    const std::vector<double> same(5, 7.0);
    CHECK(sample_stats(same).std_error == 0.0);
  }
}
