#pragma once

#include "actguard/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace actguard {

/// ceil(x) with a relative tolerance, so products like 0.95 * 20 that land a
/// rounding error above an integer are not pushed to the next rank.
inline std::size_t ceil_rank(double x) {
  const double slack = 1e-9 * std::max(1.0, std::abs(x));
  const double r = std::ceil(x - slack);
  return r <= 0.0 ? 0 : static_cast<std::size_t>(r);
}

/// 1-based nearest-rank index for a percentile in (0, 100] over n samples.
inline std::size_t nearest_rank(std::size_t n, double percentile) {
  if (n == 0) throw DataError("nearest_rank: empty sample");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ConfigError("nearest_rank: percentile must lie in (0, 100]");
  }
  const std::size_t rank = ceil_rank(percentile * static_cast<double>(n) / 100.0);
  return std::clamp<std::size_t>(rank, 1, n);
}

/// Nearest-rank percentile of an ascending-sorted sample.
template <typename Scalar>
Scalar percentile_sorted(std::span<const Scalar> sorted, double percentile) {
  return sorted[nearest_rank(sorted.size(), percentile) - 1];
}

/// Nearest-rank percentile; sorts a copy.
template <typename Scalar>
Scalar percentile(std::vector<Scalar> values, double percentile_value) {
  std::sort(values.begin(), values.end());
  return percentile_sorted<Scalar>(values, percentile_value);
}

/// Median with midpoint averaging for even sizes. Reorders `values`.
template <typename Scalar>
Scalar median_inplace(std::vector<Scalar>& values) {
  if (values.empty()) throw DataError("median: empty sample");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const Scalar upper = *mid;
  if (n % 2 == 1) return upper;
  const Scalar lower = *std::max_element(values.begin(), mid);
  return (lower + upper) / Scalar(2);
}

}  // namespace actguard
