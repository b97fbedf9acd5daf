#include "actguard/conformal.hpp"
#include "actguard/contracts.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace actguard;
using actguard::fixtures::gaussian_episodes;
using actguard::fixtures::make_episode;

namespace {

SafetyContractd one_joint(double lo, double hi, double vmax) { return SafetyContractd::uniform(1, lo, hi, vmax); }

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(ContractValidation, AcceptsWellFormed) { EXPECT_TRUE(validate_contract(one_joint(0, 10, 2)).empty()); }

TEST(ContractValidation, BoundsInverted) {
  const auto issues = validate_contract(one_joint(5, 3, 2));
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].kind, ContractIssue::Kind::bounds_inverted);
  EXPECT_EQ(issues[0].joint, 0);
}

TEST(ContractValidation, NonpositiveVelocity) {
  const auto issues = validate_contract(one_joint(0, 10, 0));
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].kind, ContractIssue::Kind::nonpositive_velocity);
  EXPECT_EQ(issues[0].joint, 0);
}

TEST(ContractValidation, LengthMismatchAndNaN) {
  auto c = SafetyContractd::uniform(2, 0, 512, 30);
  c.v_max = vec({30});
  ASSERT_FALSE(validate_contract(c).empty());
  EXPECT_EQ(validate_contract(c)[0].kind, ContractIssue::Kind::length_mismatch);

  auto n = SafetyContractd::uniform(2, 0, 512, 30);
  n.upper[1] = std::nan("");
  const auto issues = validate_contract(n);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].kind, ContractIssue::Kind::nan_value);
  EXPECT_EQ(issues[0].joint, 1);
}

TEST(ContractValidation, GuardRejectsInvalidContract) {
  EXPECT_THROW(SafetyGuardd(one_joint(5, 3, 2)), ConfigError);
}

TEST(SafetyGuard, VelocityClampAfterClip) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.seed_previous(vec({5}));
  const auto r = g.enforce(vec({9}));
  EXPECT_EQ(r.safe[0], 7.0);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::velocity);
  EXPECT_EQ(r.violations[0].magnitude, 2.0);
  EXPECT_EQ(r.violations[0].raw, 9.0);
  EXPECT_EQ(r.violations[0].enforced, 7.0);
}

TEST(SafetyGuard, BoundClipWithoutVelocityViolation) {
  SafetyGuardd g(one_joint(0, 10, 3));
  g.seed_previous(vec({9}));
  const auto r = g.enforce(vec({15}));
  EXPECT_EQ(r.safe[0], 10.0);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::bound_upper);
  EXPECT_EQ(r.violations[0].magnitude, 5.0);
}

TEST(SafetyGuard, PassThrough) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.seed_previous(vec({5}));
  const auto r = g.enforce(vec({6}));
  EXPECT_EQ(r.safe[0], 6.0);
  EXPECT_TRUE(r.violations.empty());
}

TEST(SafetyGuard, LowerBoundRecord) {
  SafetyGuardd g(one_joint(0, 10, 100));
  const auto r = g.enforce(vec({-3}));
  EXPECT_EQ(r.safe[0], 0.0);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, ViolationKind::bound_lower);
  EXPECT_EQ(r.violations[0].magnitude, 3.0);
}

TEST(SafetyGuard, ResetClearsStateKeepsLog) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.enforce(vec({5}));
  g.enforce(vec({9}));
  g.enforce(vec({1}));
  EXPECT_EQ(g.step_count(), 3u);
  const auto logged = g.violation_log().size();
  EXPECT_GT(logged, 0u);
  g.reset();
  EXPECT_EQ(g.step_count(), 0u);
  EXPECT_FALSE(g.has_previous());
  EXPECT_EQ(g.violation_log().size(), logged);
  EXPECT_EQ(g.episode(), 1u);
  ASSERT_EQ(g.episode_starts().size(), 1u);
  EXPECT_EQ(g.episode_starts()[0], logged);
}

TEST(SafetyGuard, ResetOnFreshStateIsNoOp) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.reset();
  EXPECT_EQ(g.episode(), 0u);
  EXPECT_TRUE(g.episode_starts().empty());
  EXPECT_FALSE(g.has_previous());
}

TEST(SafetyGuard, FirstStepAfterResetSkipsVelocity) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.enforce(vec({0}));
  g.reset();
  const auto r = g.enforce(vec({9}));
  EXPECT_EQ(r.safe[0], 9.0);
  EXPECT_TRUE(r.violations.empty());
}

TEST(SafetyGuard, RejectsNonFiniteAndWrongDims) {
  SafetyGuardd g(SafetyContractd::uniform(2, 0, 1, 1));
  EXPECT_THROW(g.enforce(vec({0.5})), DataError);
  EXPECT_THROW(g.enforce(vec({0.5, std::nan("")})), DataError);
  EXPECT_THROW(g.enforce(vec({0.5, std::numeric_limits<double>::infinity()})), DataError);
  EXPECT_EQ(g.step_count(), 0u);
}

TEST(SafetyGuard, SeedOutsideBoundsTriggersReclip) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.seed_previous(vec({20}));
  const auto r = g.enforce(vec({5}));
  // clip leaves 5, the clamp moves it to 18, the re-clip brings it back to 10
  EXPECT_EQ(r.safe[0], 10.0);
  EXPECT_GE(r.violations.size(), 1u);
}

TEST(SafetyGuard, EnforceIntoMayAlias) {
  SafetyGuardd g(one_joint(0, 10, 2));
  g.seed_previous(vec({5}));
  VectorXd a = vec({9});
  g.enforce_into(a, a);
  EXPECT_EQ(a[0], 7.0);
}

TEST(SafetyGuard, UnboundedIsIdentity) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0, 1e6);
  SafetyGuardd g(SafetyContractd::unbounded(3));
  for (int i = 0; i < 200; ++i) {
    VectorXd a(3);
    for (auto& x : a) x = normal(rng);
    const auto r = g.enforce(a);
    EXPECT_EQ(r.safe, a);
    EXPECT_TRUE(r.violations.empty());
  }
}

// Random contracts, previous actions and raw actions: the output stays in
// bounds, respects v_max whenever prev lies in bounds, and enforcing it again
// from the same prev changes nothing.
TEST(SafetyGuardProperty, BoundsVelocityIdempotence) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-100, 100);
  std::uniform_real_distribution<double> pos(0.01, 50);
  for (int trial = 0; trial < 5000; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 4);
    SafetyContractd c;
    c.dims = d;
    c.lower.resize(d);
    c.upper.resize(d);
    c.v_max.resize(d);
    VectorXd prev(d), raw(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = u(rng), b = u(rng);
      c.lower[j] = std::min(a, b);
      c.upper[j] = std::max(a, b);
      c.v_max[j] = pos(rng);
      std::uniform_real_distribution<double> in(c.lower[j], c.upper[j]);
      prev[j] = in(rng);
      raw[j] = u(rng) * 2;
    }
    SafetyGuardd g(c);
    g.seed_previous(prev);
    const VectorXd safe = g.enforce(raw).safe;
    for (Eigen::Index j = 0; j < d; ++j) {
      ASSERT_GE(safe[j], c.lower[j]);
      ASSERT_LE(safe[j], c.upper[j]);
      ASSERT_LE(std::abs(safe[j] - prev[j]), c.v_max[j] * (1 + 1e-12));
    }
    SafetyGuardd again(c);
    again.seed_previous(prev);
    const auto r2 = again.enforce(safe);
    ASSERT_EQ(r2.safe, safe);
    ASSERT_TRUE(r2.violations.empty());
  }
}

TEST(GuardFromDemos, ContractIsValid) {
  std::mt19937_64 rng(5);
  const auto demos = gaussian_episodes(25, 40, 3, rng);
  const auto g = guard_from_demos<double>(demos, 0.05);
  EXPECT_TRUE(validate_contract(g.contract()).empty());
  EXPECT_EQ(g.contract().provenance, Provenance::conformal);
  EXPECT_TRUE(g.contract().score_model.has_value());
}

TEST(GuardFromDemos, EmptyAndMixedDims) {
  std::vector<Episode> none;
  EXPECT_THROW(guard_from_demos<double>(none, 0.05), DataError);
  std::vector<Episode> mixed = {make_episode("a", ActionMatrixXd::Zero(5, 2)),
                                make_episode("b", ActionMatrixXd::Zero(5, 3))};
  EXPECT_THROW(guard_from_demos<double>(mixed, 0.05), DataError);
}
