#pragma once

#include <span>
#include <vector>

namespace casimir::numerics {

/// Pairwise (cascade) summation; result is independent of how the caller
/// partitions work as long as the input order is fixed.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

/// Root-mean-square deviation about the mean.
double rms_about_mean(std::span<const double> values);

double median(std::vector<double> values);

/// Median absolute deviation (unscaled).
double median_absolute_deviation(std::span<const double> values);

/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct Histogram {
  std::vector<double> edges;  // size = counts.size() + 1
  std::vector<int> counts;
};

/// Freedman-Diaconis binning; collapses to one bin when the IQR is zero.
Histogram freedman_diaconis_histogram(std::span<const double> values);

}  // namespace casimir::numerics
