#include "deception_lq/numerics.hpp"

#include <cmath>
#include <vector>

#include "deception_lq/errors.hpp"
#include "deception_lq/model.hpp"

namespace deception_lq {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 64;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double trapezoid(const TimeGrid& grid, std::span<const double> values) {
  if (values.size() != grid.size()) {
    throw DomainError("trapezoid: sample count does not match the grid");
  }
  std::vector<double> weighted(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    weighted[k] = grid.trapezoid_weight(k) * values[k];
  }
  return pairwise_sum(weighted);
}

SampleStats sample_stats(std::span<const double> values) {
  SampleStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  s.mean = pairwise_sum(values) / static_cast<double>(s.n);
  if (s.n < 2) return s;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - s.mean;
    sq[i] = d * d;
  }
  s.stddev = std::sqrt(pairwise_sum(sq) / static_cast<double>(s.n - 1));
  s.std_error = s.stddev / std::sqrt(static_cast<double>(s.n));
  return s;
}

}  // namespace deception_lq
