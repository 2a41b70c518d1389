#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deception_lq/model.hpp"

namespace deception_lq {

enum class PenaltyKind { quadratic, kl_log };

std::string_view to_string(PenaltyKind kind) noexcept;

/// Trust-region penalty P(f_c) weighted by lambda_reg / sigma_W^2:
///   quadratic: int (f_c - f_init)^2 dt
///   kl_log:    int f_init log(f_init / f_c) dt
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::quadratic;
  Pattern f_init;
  double lambda_reg = 0.0;
};

/// Throws DomainError unless lambda_reg is finite and >= 0, and f_init is
/// strictly positive for kl_log.
void validate_penalty(const PenaltySpec& spec);

/// Trapezoid of the penalty integrand. kl_log requires f_c > 0 everywhere.
double penalty_value(const Pattern& f_c, const PenaltySpec& spec);

/// The red team's objective at one pattern, in the simplified setting
/// (f_d = vbar = 0, vbar_T = 0).
struct RedEvaluation {
  double objective = 0.0;
  double expected_log_L = 0.0;
  double penalty = 0.0;
};

/// Solves the coefficient system, propagates the moments and integrates
///   J_red = E log L_T + (lambda_reg / sigma_W^2) P(f_c).
RedEvaluation evaluate_red(const Pattern& f_c, const ModelParams& p, const PenaltySpec& spec);
double red_objective(const Pattern& f_c, const ModelParams& p, const PenaltySpec& spec);

/// Exact gradient of red_objective with respect to the samples of f_c,
/// obtained by reverse differentiation of the RK4 and trapezoid steps.
std::vector<double> red_gradient(const Pattern& f_c, const ModelParams& p, const PenaltySpec& spec);

enum class RedMethod { fpi, fbs, gd };

std::string_view to_string(RedMethod method) noexcept;

struct RedResult {
  Pattern f_hat;
  double objective = 0.0;
  double expected_log_L = 0.0;
  double penalty = 0.0;
  RedMethod method = RedMethod::fpi;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective at each iterate, starting with the initial pattern.
  std::vector<double> history;

  ModelParams params;
  PenaltyKind penalty_kind = PenaltyKind::quadratic;
  double lambda_reg = 0.0;
  std::vector<std::string> warnings;
};

struct SweepOptions {
  double tol = 1e-6;
  std::size_t max_iter = 500;
  /// Damping (FPI) or relaxation (FBS) weight of the new pointwise minimiser.
  double relaxation = 0.5;
};

/// Fixed-point iteration: minimise the objective's integrand pointwise with
/// (eta, rho, h11, h02) frozen at the current iterate, then damp.
RedResult optimize_fpi(const ModelParams& p, const PenaltySpec& spec, const Pattern& f0,
                       const SweepOptions& options = {});

/// Forward-backward sweep: state sweep, costate sweep (discrete adjoint), then
/// pointwise minimisation of the Hamiltonian in f_c with relaxation.
RedResult optimize_fbs(const ModelParams& p, const PenaltySpec& spec, const Pattern& f0,
                       const SweepOptions& options = {});

/// Finite basis for the parametric surrogate. Polynomial uses Legendre
/// polynomials in 2t/T - 1 up to `order` (order 0 is the constant basis);
/// Fourier uses 1, cos(2 pi j t/T), sin(2 pi j t/T) for j = 1..order.
struct Basis {
  enum class Kind { polynomial, fourier };
  Kind kind = Kind::polynomial;
  std::size_t order = 0;

  std::size_t dimension() const noexcept;
  /// Basis function j sampled on the grid.
  std::vector<double> sample(std::size_t j, const TimeGrid& grid) const;
  Pattern synthesize(std::span<const double> coeffs, const TimeGrid& grid) const;
};

inline constexpr std::size_t kMaxBasisDimension = 16;

/// Trapezoid-weighted least-squares coefficients of f in the basis.
std::vector<double> project_onto_basis(const Basis& basis, const Pattern& f);

struct GradientDescentOptions {
  double step = 1.0;
  std::size_t max_iter = 500;
  double tol = 1e-6;
};

/// Gradient descent on basis coefficients with central finite-difference
/// gradients of red_objective, preconditioned by the basis Gram matrix, with
/// step halving whenever a trial step fails to decrease the objective.
RedResult optimize_param_gd(const ModelParams& p, const PenaltySpec& spec, const Basis& basis,
                            std::span<const double> init_coeffs,
                            const GradientDescentOptions& options = {});

struct PairGap {
  std::size_t a = 0;
  std::size_t b = 0;
  /// max |f_a - f_b| / max(max |f_a|, max |f_b|)
  double pattern_gap = 0.0;
  /// |J_a - J_b| / max(|J_a|, |J_b|)
  double objective_gap = 0.0;
  bool flagged = false;
};

struct ConsistencyReport {
  std::vector<PairGap> pairs;
  double threshold = 0.05;
  bool any_flagged() const noexcept;
};

/// Pairwise gaps between results of the same configuration; a pair is
/// flagged when either gap exceeds `threshold`.
ConsistencyReport cross_validate(std::span<const RedResult> results, double threshold = 0.05);

/// Columns t, f_hat.
void write_f_hat_csv(std::ostream& out, const RedResult& r);

}  // namespace deception_lq
