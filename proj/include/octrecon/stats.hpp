#pragma once

#include <span>
#include <vector>

namespace octrecon::stats {

/// Pairwise (cascade) summation; fixed evaluation order for any input.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

/// Population standard deviation (1/N).
double population_std(std::span<const double> values);

/// Linear-interpolated percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

}  // namespace octrecon::stats
