#include "actguard/drift.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace actguard;

namespace {

// (1 + #{s_i >= score}) / (n + 1) by a linear scan.
double oracle_pvalue(double score, const std::vector<double>& cal) {
  int ge = 0;
  for (double s : cal) ge += s >= score ? 1 : 0;
  return (1.0 + ge) / (double(cal.size()) + 1.0);
}

}  // namespace

TEST(ConformalPvalue, Examples) {
  const std::vector<double> nine = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_DOUBLE_EQ(conformal_pvalue<double>(100.0, nine), 0.1);
  EXPECT_DOUBLE_EQ(conformal_pvalue<double>(0.5, nine), 1.0);
  EXPECT_DOUBLE_EQ(conformal_pvalue<double>(1.0, nine), 1.0);
  const std::vector<double> four = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(conformal_pvalue<double>(2.5, four), 0.6);
  EXPECT_THROW(conformal_pvalue<double>(1.0, std::vector<double>{}), DataError);
}

TEST(ConformalPvalue, MatchesLinearScanWithTies) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 20);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> cal(1 + rng() % 40);
    for (auto& s : cal) s = u(rng) / 4.0;
    std::sort(cal.begin(), cal.end());
    const double score = u(rng) / 4.0;
    ASSERT_DOUBLE_EQ(conformal_pvalue<double>(score, cal), oracle_pvalue(score, cal));
  }
}

TEST(Cusum, SingleSteps) {
  auto st = CusumState::make(0.05, 5);
  EXPECT_EQ(cusum_step(st, 0.5).s, 0.0);
  EXPECT_DOUBLE_EQ(cusum_step(st, 0.01).s, 0.95);
  EXPECT_THROW(cusum_step(st, 1.5), DataError);
  EXPECT_THROW(cusum_step(st, -0.1), DataError);
  EXPECT_THROW(CusumState::make(0.0, 5), ConfigError);
  EXPECT_THROW(CusumState::make(0.05, 0), ConfigError);
}

TEST(Cusum, AllZeroAlarmsAtStepSix) {
  const std::vector<double> p(20, 0.0);
  const auto run = cusum_run(p, 0.05, 5.0);
  ASSERT_TRUE(run.alarm_step);
  EXPECT_EQ(*run.alarm_step, 6u);
  EXPECT_DOUBLE_EQ(run.trajectory[4], 4.75);
}

TEST(Cusum, AllZeroClosedForm) {
  // S_t = t (1 - alpha); first t with S_t > h
  for (double alpha : {0.01, 0.05, 0.1, 0.2}) {
    for (double h : {0.5, 1.0, 2.5, 5.0, 9.0}) {
      const double ratio = h / (1 - alpha);
      const auto ceil_t = static_cast<std::uint64_t>(std::ceil(ratio - 1e-9));
      const bool boundary = std::abs(ratio - std::round(ratio)) < 1e-9;
      const std::uint64_t expected = boundary ? ceil_t + 1 : ceil_t;
      const std::vector<double> p(200, 0.0);
      const auto run = cusum_run(p, alpha, h);
      ASSERT_TRUE(run.alarm_step);
      if (boundary) {
        // accumulated rounding decides which side of h the exact hit lands on
        EXPECT_GE(*run.alarm_step, ceil_t);
        EXPECT_LE(*run.alarm_step, expected);
      } else {
        EXPECT_EQ(*run.alarm_step, expected) << alpha << " " << h;
      }
      EXPECT_GE(run.trajectory[*run.alarm_step - 1], h);
      if (*run.alarm_step > 1) {
        EXPECT_LE(run.trajectory[*run.alarm_step - 2], h);
      }
    }
  }
}

TEST(Cusum, AllOneNeverAlarms) {
  const std::vector<double> p(1000, 1.0);
  const auto run = cusum_run(p, 0.05, 5.0);
  EXPECT_FALSE(run.alarm_step);
  for (double s : run.trajectory) EXPECT_EQ(s, 0.0);
}

TEST(Cusum, KeepsFirstAlarmAndAccumulates) {
  auto st = CusumState::make(0.5, 0.4);
  st = cusum_step(st, 0.0);
  EXPECT_TRUE(st.alarmed);
  EXPECT_EQ(st.alarm_step, 1u);
  st = cusum_step(st, 0.0);
  EXPECT_EQ(st.alarm_step, 1u);
  EXPECT_DOUBLE_EQ(st.s, 1.0);
  st.reset();
  EXPECT_FALSE(st.alarmed);
  EXPECT_EQ(st.s, 0.0);
  EXPECT_EQ(st.t, 0u);
}

TEST(CusumProperty, TrajectoryNonNegativeAndBoundedIncrements) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(5000);
  for (auto& x : p) x = u(rng);
  const auto run = cusum_run(p, 0.05, 5.0);
  double prev = 0;
  for (double s : run.trajectory) {
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s - prev, 0.95 + 1e-12);
    ASSERT_GE(s - prev, -0.05 - 1e-12);
    prev = s;
  }
}

// Lowering any p-value can only raise the statistic.
TEST(CusumProperty, MonotoneInViolations) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(300);
    for (auto& x : p) x = u(rng);
    std::vector<double> q = p;
    for (auto& x : q) {
      if (u(rng) < 0.1) x = 0.0;
    }
    const auto a = cusum_run(p, 0.05, 3.0), b = cusum_run(q, 0.05, 3.0);
    for (std::size_t t = 0; t < p.size(); ++t) ASSERT_GE(b.trajectory[t], a.trajectory[t] - 1e-12);
    if (a.alarm_step) {
      ASSERT_TRUE(b.alarm_step);
      ASSERT_LE(*b.alarm_step, *a.alarm_step);
    }
  }
}

TEST(Cusum, NullDriftIsSmall) {
  // Under uniform p the increment has mean zero: after 10,000 steps the
  // statistic's average stays far below what a shifted stream produces.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> null_p(10000), shifted(10000);
  for (auto& x : null_p) x = u(rng);
  for (auto& x : shifted) x = u(rng) * 0.5;
  const auto a = cusum_run(null_p, 0.05, 5.0), b = cusum_run(shifted, 0.05, 5.0);
  double mean_a = 0, mean_b = 0;
  for (std::size_t i = 0; i < null_p.size(); ++i) {
    mean_a += a.trajectory[i];
    mean_b += b.trajectory[i];
  }
  EXPECT_LT(mean_a, mean_b);
  ASSERT_TRUE(b.alarm_step);
}
