#pragma once

#include <cstddef>
#include <span>

namespace deception_lq {

class TimeGrid;

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how a caller partitioned the work that produced them.
double pairwise_sum(std::span<const double> values);

/// Trapezoid rule of grid samples (values.size() == grid.size()).
double trapezoid(const TimeGrid& grid, std::span<const double> values);

struct SampleStats {
  double mean = 0.0;
  double stddev = 0.0;  // unbiased (n - 1) sample standard deviation
  double std_error = 0.0;
  std::size_t n = 0;
};

SampleStats sample_stats(std::span<const double> values);

}  // namespace deception_lq
