#include "actguard/order_stats.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace actguard;

namespace {

// Textbook nearest-rank: smallest rank r with r/n >= p/100, done in integers.
std::size_t oracle_rank(std::size_t n, int percent) {
  for (std::size_t r = 1; r <= n; ++r) {
    if (100 * r >= static_cast<std::size_t>(percent) * n) return r;
  }
  return n;
}

}  // namespace

TEST(OrderStats, NearestRankMatchesIntegerOracle) {
  for (std::size_t n = 1; n <= 120; ++n) {
    for (int p = 1; p <= 100; ++p) {
      ASSERT_EQ(nearest_rank(n, p), oracle_rank(n, p)) << "n=" << n << " p=" << p;
    }
  }
}

TEST(OrderStats, PercentileOfTenDeltas) {
  std::vector<double> deltas = {1, 1, 1, 1, 1, 1, 1, 1, 1, 10};
  EXPECT_EQ(percentile(deltas, 99.0), 10.0);
  EXPECT_EQ(percentile(deltas, 90.0), 1.0);
  EXPECT_EQ(percentile(deltas, 100.0), 10.0);
}

TEST(OrderStats, PercentileIgnoresInputOrder) {
  std::mt19937_64 rng(3);
  std::vector<double> v(57);
  std::uniform_real_distribution<double> u(-5, 5);
  for (auto& x : v) x = u(rng);
  const double expected = percentile(v, 37.5);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(percentile(v, 37.5), expected);
  }
}

TEST(OrderStats, RejectsBadArguments) {
  EXPECT_THROW(nearest_rank(0, 50), DataError);
  EXPECT_THROW(nearest_rank(5, 0), ConfigError);
  EXPECT_THROW(nearest_rank(5, 100.5), ConfigError);
}

TEST(OrderStats, CeilRankToleratesRoundingNoise) {
  EXPECT_EQ(ceil_rank(0.95 * 100.0), 95u);
  EXPECT_EQ(ceil_rank(19.000000000001), 19u);
  EXPECT_EQ(ceil_rank(19.01), 20u);
  EXPECT_EQ(ceil_rank(-1.0), 0u);
}

TEST(OrderStats, Median) {
  std::vector<double> odd = {5, 1, 3};
  EXPECT_EQ(median_inplace(odd), 3.0);
  std::vector<double> even = {4, 1, 3, 2};
  EXPECT_EQ(median_inplace(even), 2.5);
  std::vector<double> empty;
  EXPECT_THROW(median_inplace(empty), DataError);
}
