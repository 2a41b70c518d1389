#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "deception_lq/errors.hpp"
#include "deception_lq/monte_carlo.hpp"
#include "deception_lq/simulate.hpp"
#include "support.hpp"

using namespace deception_lq;
using namespace test_support;

namespace {

// Applies fixed controls regardless of the state.
class FixedPolicy final : public FeedbackPolicy {
 public:
  FixedPolicy(double alpha, double beta) : c_{alpha, beta} {}
  Controls at_step(std::size_t, double, double, double) const override { return c_; }

 private:
  Controls c_;
};

bool same_paths(const PathEnsemble& a, const PathEnsemble& b) {
  if (a.n_paths() != b.n_paths()) return false;
  for (std::size_t i = 0; i < a.n_paths(); ++i) {
    const PathView x = a.path(i), y = b.path(i);
    if (!std::equal(x.V.begin(), x.V.end(), y.V.begin()) ||
        !std::equal(x.Y.begin(), x.Y.end(), y.Y.begin()) ||
        !std::equal(x.dW.begin(), x.dW.end(), y.dW.begin()) ||
        !std::equal(x.beta.begin(), x.beta.end(), y.beta.begin())) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("noise-free run sits at the cost's fixed point") {
    const TimeGrid g(1.0, 2000);
    ModelParams p = blue_params(0.0);
    const double c = 1.5;
    p.vbar_T = c;
    p.v0 = c;
    p.y0 = 0.0;
    const ControlLaw law = ControlLaw::solve(p, constant(g, 0.0), constant(g, 0.0), constant(g, c));
    const PathEnsemble e = simulate_paths(law, 1, 9, SimulationOptions{.workers = 1, .noise = false});
    const PathView path = e.path(0);
    for (std::size_t k = 0; k < g.size(); ++k) {
      CHECK(path.V[k] == doctest::Approx(c).epsilon(1e-12));
      CHECK(std::abs(path.alpha[k]) <= 1e-12);
      CHECK(path.Y[k] == doctest::Approx(c * g.time(k)).epsilon(1e-9));
    }
  }

  TEST_CASE("initial samples and sizes") {
    const TimeGrid g(1.0, 50);
    const PathEnsemble e = simulate_paths(blue_law(0.05, sinusoid(g, 0.5)), 300, 1);
    CHECK(e.n_paths() == 300);
    CHECK(e.seed() == 1);
    for (std::size_t i = 0; i < e.n_paths(); ++i) {
      const PathView path = e.path(i);
      CHECK(path.V.size() == g.size());
      CHECK(path.dW.size() == g.n_steps());
      CHECK(path.V[0] == 2.0);
      CHECK(path.Y[0] == 4.0);
    }
    CHECK_THROWS_AS(e.path(300), DomainError);
  }

  TEST_CASE("ensembles are bit-identical across runs and worker counts") {
    const TimeGrid g(1.0, 200);
    const ControlLaw law = blue_law(0.075, sinusoid(g, 0.5));
    const PathEnsemble one = simulate_paths(law, 1, 77);
    CHECK(same_paths(one, simulate_paths(law, 1, 77)));
    const PathEnsemble a = simulate_paths(law, 700, 77, {.workers = 1});
    const PathEnsemble b = simulate_paths(law, 700, 77, {.workers = 3});
    const PathEnsemble c = simulate_paths(law, 700, 77, {.workers = 8});
    CHECK(same_paths(a, b));
    CHECK(same_paths(a, c));
    CHECK_FALSE(same_paths(a, simulate_paths(law, 700, 78)));
  }

  TEST_CASE("path increments follow the Euler-Maruyama recursion") {
    const TimeGrid g(1.0, 100);
    const ControlLaw law = blue_law(0.05, sinusoid(g, 0.5));
    const ModelParams& p = law.params();
    const PathEnsemble e = simulate_paths(law, 3, 5);
    const PathView path = e.path(2);
    for (std::size_t k = 0; k < g.n_steps(); ++k) {
      CHECK(path.alpha[k] == alpha_hat(law, g.time(k), path.V[k], path.Y[k]));
      const double y_next = path.Y[k] + (path.V[k] + path.beta[k]) * g.dt() + p.sigma_W * path.dW[k];
      CHECK(path.Y[k + 1] == doctest::Approx(y_next).epsilon(1e-14));
    }
  }

  TEST_CASE("lambda = 0 leaves beta at exactly zero on every path") {
    const TimeGrid g(1.0, 500);
    const PathEnsemble e = simulate_paths(blue_law(0.0, sinusoid(g, 0.5)), 500, 3);
    for (std::size_t i = 0; i < e.n_paths(); ++i) {
      for (double b : e.path(i).beta) CHECK(b == 0.0);
    }
  }

  TEST_CASE("forced zero controls on the reference path cost nothing") {
    const TimeGrid g(1.0, 100);
    ModelParams p = blue_params(0.0);
    p.v0 = 1.0;
    p.vbar_T = 1.0;
    const Pattern vb = constant(g, 1.0);
    const PathEnsemble e = simulate_paths(FixedPolicy(0.0, 0.0), p, g, 4, 1, {.noise = false});
    const CostEstimate c = estimate_primary_cost(e, p, vb);
    CHECK(c.mean == 0.0);
    CHECK(c.std_error == 0.0);
    CHECK(c.n_paths == 4);
  }

  TEST_CASE("blue cost reduces to primary cost when the statistic vanishes") {
    const TimeGrid g(1.0, 200);
    const Pattern zero = constant(g, 0.0), vb = blue_vbar(g);
    const ControlLaw l0 = blue_law(0.0, sinusoid(g, 0.5));
    const PathEnsemble e0 = simulate_paths(l0, 300, 4);
    const CostEstimate a = estimate_primary_cost(e0, l0.params(), vb);
    const CostEstimate b = estimate_blue_cost(e0, l0.params(), l0.f_c(), zero, vb);
    CHECK(a.mean == b.mean);
    CHECK(a.std_error == b.std_error);

    const ControlLaw lz = blue_law(0.075, zero);
    const PathEnsemble ez = simulate_paths(lz, 300, 4);
    CHECK(estimate_primary_cost(ez, lz.params(), vb).mean ==
          estimate_blue_cost(ez, lz.params(), zero, zero, vb).mean);
  }

  TEST_CASE("mean velocity follows the deterministic mean dynamics") {
    // For lambda = 0 the closed loop is linear, so E[V] solves
    // m' = -(mu m + gamma)/r_alpha with eta = 0.
    const TimeGrid g(1.0, 2000);
    const ControlLaw law = blue_law(0.0, sinusoid(g, 0.5));
    const MonteCarloSummary s = run_monte_carlo(law, {.n_paths = 10000, .seed = 21});
    const auto& c = law.coeffs();
    double m = law.params().v0;
    for (std::size_t k = 0; k < g.n_steps(); ++k) {
      m += -(c.mu()[k] * m + c.gamma()[k]) / law.params().r_alpha * g.dt();
    }
    const CostEstimate vT = make_estimate(s.terminal_V);
    CHECK(std::abs(vT.mean - m) <= 3.0 * vT.std_error);
    CHECK(s.mean_V.back() == doctest::Approx(vT.mean).epsilon(1e-12));
  }

  TEST_CASE("value function bounds the Monte Carlo blue cost") {
    const TimeGrid g(1.0, 2000);
    const ControlLaw law = blue_law(0.075, sinusoid(g, 0.5));
    const MonteCarloSummary s = run_monte_carlo(law, {.n_paths = 10000, .seed = 8});
    const double v0 = value_function(law, 0.0, law.params().v0, law.params().y0);
    CHECK(std::abs(s.blue_cost.mean - v0) <= 3.0 * s.blue_cost.std_error);
  }

  TEST_CASE("optimal law beats perturbed linear laws") {
    class Perturbed final : public FeedbackPolicy {
     public:
      Perturbed(const ControlLaw& law, double da, double db) : law_(law), da_(da), db_(db) {}
      Controls at_step(std::size_t k, double t, double v, double y) const override {
        Controls c = law_.at_step(k, t, v, y);
        c.alpha += da_ * v;
        c.beta += db_ * y;
        return c;
      }

     private:
      const ControlLaw& law_;
      double da_, db_;
    };
    const TimeGrid g(1.0, 1000);
    const ControlLaw law = blue_law(0.075, sinusoid(g, 0.5));
    const ModelParams& p = law.params();
    const Pattern zero = constant(g, 0.0);
    const PathEnsemble opt = simulate_paths(law, 4000, 6);
    const CostEstimate best = estimate_blue_cost(opt, p, law.f_c(), zero, law.vbar());
    for (auto [da, db] : {std::pair{0.3, 0.0}, {0.0, 0.2}, {-0.3, -0.2}}) {
      const PathEnsemble e = simulate_paths(Perturbed(law, da, db), p, g, 4000, 6);
      const CostEstimate c = estimate_blue_cost(e, p, law.f_c(), zero, law.vbar());
      CHECK(best.mean <= c.mean + 3.0 * std::hypot(best.std_error, c.std_error));
    }
  }

  TEST_CASE("streaming summary matches the stored ensemble") {
    const TimeGrid g(1.0, 200);
    const ControlLaw law = blue_law(0.05, sinusoid(g, 0.5));
    const PathEnsemble e = simulate_paths(law, 600, 12);
    const MonteCarloSummary s =
        run_monte_carlo(law, {.n_paths = 600, .seed = 12, .export_paths = 600});
    CHECK(same_paths(e, *s.exported));
    const CostEstimate j = estimate_primary_cost(e, law.params(), law.vbar());
    CHECK(s.primary_cost.mean == j.mean);
    CHECK(s.primary_cost.std_error == j.std_error);
    const MonteCarloSummary s4 =
        run_monte_carlo(law, {.n_paths = 600, .seed = 12, .simulation = {.workers = 4}});
    CHECK(s4.mean_Y == s.mean_Y);
    CHECK(s4.blue_cost.mean == s.blue_cost.mean);
  }

  TEST_CASE("path csv") {
    const TimeGrid g(1.0, 10);
    const PathEnsemble e = simulate_paths(blue_law(0.05, sinusoid(g, 0.5)), 2, 1);
    std::ostringstream out;
    write_path_csv(out, e, 1);
    const std::string s = out.str();
    CHECK(s.rfind("t,V,Y,alpha,beta\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 12);
  }

  TEST_CASE("non-finite states name the path") {
    const TimeGrid g(1.0, 10);
    const ModelParams p = blue_params(0.0);
    try {
      simulate_paths(FixedPolicy(std::numeric_limits<double>::infinity(), 0.0), p, g, 3, 1, {.workers = 1});
      FAIL("expected SolverError");
    } catch (const SolverError& e) {
      CHECK(std::string(e.what()).find("path 0") != std::string::npos);
    }
  }
}
