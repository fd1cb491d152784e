#include "casimir/numerics/stats.hpp"

#include "casimir/errors.hpp"

#include <algorithm>
#include <cmath>

namespace casimir::numerics {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of empty sample");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

double rms_about_mean(std::span<const double> v) {
  const double m = mean(v);
  std::vector<double> sq(v.size());
  std::transform(v.begin(), v.end(), sq.begin(), [m](double x) { return (x - m) * (x - m); });
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size()));
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return v[lo] + f * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double median_absolute_deviation(std::span<const double> v) {
  const double med = median(std::vector<double>(v.begin(), v.end()));
  std::vector<double> dev(v.size());
  std::transform(v.begin(), v.end(), dev.begin(), [med](double x) { return std::abs(x - med); });
  return median(std::move(dev));
}

Histogram freedman_diaconis_histogram(std::span<const double> v) {
  if (v.empty()) throw ValidationError("histogram of empty sample");
  std::vector<double> s(v.begin(), v.end());
  const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
  const double lo = *lo_it, hi = *hi_it;
  const double iqr = quantile(s, 0.75) - quantile(s, 0.25);
  Histogram h;
  std::size_t bins = 1;
  if (iqr > 0.0 && hi > lo) {
    const double width = 2.0 * iqr / std::cbrt(static_cast<double>(s.size()));
    bins = static_cast<std::size_t>(std::clamp(std::ceil((hi - lo) / width), 1.0, 1000.0));
  }
  const double span = hi > lo ? hi - lo : 1e-12 * std::max(1.0, std::abs(lo));
  const double left = hi > lo ? lo : lo - 0.5 * span;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = left + span * static_cast<double>(i) / bins;
  h.counts.assign(bins, 0);
  for (double x : s) {
    auto i = static_cast<std::size_t>((x - left) / span * static_cast<double>(bins));
    h.counts[std::min(i, bins - 1)]++;
  }
  return h;
}

}  // namespace casimir::numerics
