#include "deception_lq/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "deception_lq/errors.hpp"

namespace deception_lq {

namespace {

void require_positive(double value, const char* name) {
  if (!std::isfinite(value) || !(value > 0.0)) {
    throw InvalidParams(fmt::format("{} must be finite and > 0 (got {})", name, value));
  }
}

void require_finite(double value, const char* name) {
  if (!std::isfinite(value)) {
    throw InvalidParams(fmt::format("{} must be finite (got {})", name, value));
  }
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

ModelParams validate_params(const ModelParams& p) {
  require_positive(p.horizon_T, "horizon_T");
  require_positive(p.sigma_B, "sigma_B");
  require_positive(p.sigma_W, "sigma_W");
  require_positive(p.r_alpha, "r_alpha");
  require_positive(p.r_beta, "r_beta");
  require_positive(p.r_v, "r_v");
  require_positive(p.t_v, "t_v");
  require_finite(p.vbar_T, "vbar_T");
  require_finite(p.v0, "v0");
  require_finite(p.y0, "y0");
  require_finite(p.lambda, "lambda");
  if (p.lambda < 0.0) {
    throw InvalidParams(fmt::format("lambda must be >= 0 (got {})", p.lambda));
  }
  if (p.lambda > p.lambda_bound()) {
    throw InvalidParams(fmt::format("lambda exceeds r_beta·sigma_W² ({} > {})", p.lambda,
                                    p.lambda_bound()));
  }
  return p;
}

TimeGrid::TimeGrid(double horizon_T, std::size_t n_steps)
    : horizon_(horizon_T), n_steps_(n_steps), dt_(0.0) {
  if (!std::isfinite(horizon_T) || !(horizon_T > 0.0)) {
    throw DomainError(fmt::format("time grid horizon must be > 0 (got {})", horizon_T));
  }
  if (n_steps == 0) {
    throw DomainError("time grid needs at least one step");
  }
  dt_ = horizon_T / static_cast<double>(n_steps);
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> out(size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = time(k);
  return out;
}

Pattern::Pattern(TimeGrid grid, std::vector<double> values, std::string label)
    : grid_(grid), values_(std::move(values)), label_(std::move(label)) {
  if (values_.size() != grid_.size()) {
    throw DomainError(fmt::format("pattern '{}' has {} samples, grid needs {}", label_,
                                  values_.size(), grid_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw DomainError(fmt::format("pattern '{}' has a non-finite sample", label_));
    }
  }
}

double Pattern::eval(double t) const {
  const double T = grid_.horizon();
  // Absorbs round-off in caller-computed times such as k * dt.
  const double slack = 1e-12 * T;
  if (!(t >= -slack && t <= T + slack)) {
    throw DomainError(fmt::format("pattern '{}' evaluated at t = {} outside [0, {}]", label_, t, T));
  }
  t = std::clamp(t, 0.0, T);
  const std::size_t n = grid_.n_steps();
  const double s = t / grid_.dt();
  std::size_t k = static_cast<std::size_t>(std::floor(s));
  if (k >= n) return values_[n];
  const double t_k = grid_.time(k);
  if (t == t_k) return values_[k];
  const double w = (t - t_k) / grid_.dt();
  return (1.0 - w) * values_[k] + w * values_[k + 1];
}

bool Pattern::is_zero() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

double pattern_eval(const Pattern& f, double t) { return f.eval(t); }

Pattern make_pattern(const PatternSpec& spec, const TimeGrid& grid, std::string label) {
  std::vector<double> values(grid.size());
  std::visit(
      Overloaded{
          [&](const pattern_kind::Constant& c) {
            std::fill(values.begin(), values.end(), c.value);
          },
          [&](const pattern_kind::Sinusoid& s) {
            for (std::size_t k = 0; k < values.size(); ++k)
              values[k] = s.amplitude * std::sin(s.omega * grid.time(k));
          },
          [&](const pattern_kind::Affine& a) {
            for (std::size_t k = 0; k < values.size(); ++k)
              values[k] = a.intercept + a.slope * grid.time(k);
          },
          [&](const pattern_kind::Samples& s) { values = s.values; },
      },
      spec);
  if (label.empty()) label = describe(spec);
  return Pattern(grid, std::move(values), std::move(label));
}

std::string describe(const PatternSpec& spec) {
  return std::visit(
      Overloaded{
          [](const pattern_kind::Constant& c) { return fmt::format("constant({})", c.value); },
          [](const pattern_kind::Sinusoid& s) {
            return fmt::format("sinusoid(amp={}, omega={})", s.amplitude, s.omega);
          },
          [](const pattern_kind::Affine& a) {
            return fmt::format("affine({} + {}·t)", a.intercept, a.slope);
          },
          [](const pattern_kind::Samples& s) {
            return fmt::format("samples(n={})", s.values.size());
          },
      },
      spec);
}

}  // namespace deception_lq
