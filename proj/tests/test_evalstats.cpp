#include "actguard/evalstats.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace actguard;

namespace {

double brute_auroc(const std::vector<double>& fail, const std::vector<double>& ok) {
  double wins = 0;
  for (double f : fail) {
    for (double s : ok) wins += f > s ? 1.0 : (f == s ? 0.5 : 0.0);
  }
  return wins / (double(fail.size()) * double(ok.size()));
}

// Hypergeometric point probabilities by the recurrence
// P(x+1)/P(x) = (r1-x)(c1-x) / ((x+1)(r2-c1+x+1)), normalized by their sum.
double oracle_fisher(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  const std::int64_t r1 = a + b, r2 = c + d, c1 = a + c;
  const std::int64_t lo = std::max<std::int64_t>(0, c1 - r2), hi = std::min(r1, c1);
  std::vector<long double> w;
  long double cur = 1.0L;
  for (std::int64_t x = lo; x <= hi; ++x) {
    w.push_back(cur);
    cur *= (long double)(r1 - x) * (long double)(c1 - x) / ((long double)(x + 1) * (long double)(r2 - c1 + x + 1));
  }
  long double total = 0, tail = 0;
  for (auto v : w) total += v;
  const long double obs = w[std::size_t(a - lo)];
  for (auto v : w) {
    if (v <= obs * (1 + 1e-7L)) tail += v;
  }
  return double(tail / total);
}

LabeledScores labeled(const std::vector<double>& fail, const std::vector<double>& ok) {
  LabeledScores d;
  for (double f : fail) {
    d.scores.push_back(f);
    d.failed.push_back(true);
  }
  for (double s : ok) {
    d.scores.push_back(s);
    d.failed.push_back(false);
  }
  return d;
}

MetricsRow row(std::string id, bool success, std::string family, double reversal) {
  MetricsRow r;
  r.episode_id = std::move(id);
  r.success = success;
  r.family = std::move(family);
  r.health.reversal_rate = reversal;
  r.health.episode_len = 10;
  return r;
}

}  // namespace

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.7}, std::vector<double>{0.6, 0.4}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5, 0.5}), 0.5);
  EXPECT_EQ(auroc(std::vector<double>{0.8, 0.4}, std::vector<double>{0.6, 0.2}), 0.75);
  EXPECT_THROW(auroc(std::vector<double>{}, std::vector<double>{0.1}), DataError);
}

TEST(Auroc, MatchesBruteForceWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(0, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> fail(1 + rng() % 30), ok(1 + rng() % 30);
    for (auto& v : fail) v = u(rng);
    for (auto& v : ok) v = u(rng);
    ASSERT_NEAR(auroc(fail, ok), brute_auroc(fail, ok), 1e-12);
    ASSERT_NEAR(auroc(labeled(fail, ok)), brute_auroc(fail, ok), 1e-12);
  }
}

TEST(AurocProperty, ComplementAndMonotoneInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> fail(5 + rng() % 20), ok(5 + rng() % 20);
    for (auto& v : fail) v = n(rng) + 0.5;
    for (auto& v : ok) v = n(rng);
    const double base = auroc(fail, ok);
    ASSERT_NEAR(auroc(ok, fail), 1.0 - base, 1e-12);
    auto tf = fail, to = ok;
    for (auto& v : tf) v = std::exp(v) * 3 + 1;
    for (auto& v : to) v = std::exp(v) * 3 + 1;
    ASSERT_NEAR(auroc(tf, to), base, 1e-12);
    for (auto& v : tf) v = -v;
    for (auto& v : to) v = -v;
    ASSERT_NEAR(auroc(tf, to), 1.0 - base, 1e-12);
  }
}

TEST(Bootstrap, PerfectSeparationAndDeterminism) {
  const auto d = labeled({0.9, 0.8, 0.7, 0.95}, {0.1, 0.2, 0.3});
  const auto ci = bootstrap_auroc_ci(d, 500, 0.95, 42);
  EXPECT_EQ(ci.hi, 1.0);
  EXPECT_EQ(ci.lo, 1.0);
  const auto mixed = labeled({0.9, 0.2, 0.7, 0.5, 0.45}, {0.1, 0.6, 0.3, 0.4});
  const auto a = bootstrap_auroc_ci(mixed, 500, 0.95, 7), b = bootstrap_auroc_ci(mixed, 500, 0.95, 7);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LE(a.lo, auroc(mixed));
  EXPECT_GE(a.hi, auroc(mixed));
}

TEST(Bootstrap, RejectsBadArguments) {
  const auto d = labeled({0.9}, {0.1});
  EXPECT_THROW(bootstrap_auroc_ci(d, 10, 0.95, 0), ConfigError);
  EXPECT_THROW(bootstrap_auroc_ci(d, 200, 1.0, 0), ConfigError);
  EXPECT_THROW(bootstrap_auroc_ci(labeled({0.9}, {}), 200, 0.95, 0), DataError);
}

TEST(Bootstrap, NullCoverageMonteCarlo) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  int covered = 0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    std::vector<double> fail(50), ok(50);
    for (auto& v : fail) v = n(rng);
    for (auto& v : ok) v = n(rng);
    const auto ci = bootstrap_auroc_ci(labeled(fail, ok), 300, 0.95, std::uint64_t(i));
    covered += ci.lo <= 0.5 && 0.5 <= ci.hi ? 1 : 0;
  }
  EXPECT_GE(covered, 88);
}

TEST(Fisher, PaperCounts) {
  // success/failure counts without and with the contract
  EXPECT_NEAR(fisher_exact_two_sided({116, 84, 114, 86}), 0.92, 0.005);
  EXPECT_NEAR(fisher_exact_two_sided({113, 87, 109, 91}), 0.76, 0.005);
  EXPECT_NEAR(fisher_exact_two_sided({31, 19, 28, 22}), 0.68, 0.005);
}

TEST(Fisher, FrozenReferenceValues) {
  // scipy.stats.fisher_exact(..., alternative="two-sided")
  EXPECT_NEAR(fisher_exact_two_sided({116, 84, 114, 86}), 0.9194542945071446, 1e-10);
  EXPECT_NEAR(fisher_exact_two_sided({113, 87, 109, 91}), 0.7628270527681413, 1e-10);
  EXPECT_NEAR(fisher_exact_two_sided({31, 19, 28, 22}), 0.6845277333681987, 1e-10);
  EXPECT_NEAR(fisher_exact_two_sided({10, 10, 10, 10}), 1.0, 1e-12);
}

TEST(Fisher, MatchesRecurrenceOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::int64_t a = rng() % 40, b = rng() % 40, c = rng() % 40, d = rng() % 40;
    if (a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0) continue;
    ASSERT_NEAR(fisher_exact_two_sided({a, b, c, d}), oracle_fisher(a, b, c, d), 1e-9) << a << b << c << d;
  }
}

TEST(FisherProperty, SymmetricUnderRowColumnSwaps) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::int64_t a = rng() % 30, b = rng() % 30, c = rng() % 30, d = rng() % 30;
    if (a + b + c + d == 0) continue;
    const double p = fisher_exact_two_sided({a, b, c, d});
    ASSERT_GE(p, 0.0);
    ASSERT_LE(p, 1.0);
    ASSERT_NEAR(fisher_exact_two_sided({c, d, a, b}), p, 1e-12);
    ASSERT_NEAR(fisher_exact_two_sided({b, a, d, c}), p, 1e-12);
    ASSERT_NEAR(fisher_exact_two_sided({a, c, b, d}), p, 1e-12);
  }
}

TEST(Fisher, DegenerateTables) {
  EXPECT_EQ(fisher_exact_two_sided({0, 0, 5, 5}), 1.0);
  EXPECT_EQ(fisher_exact_two_sided({5, 0, 5, 0}), 1.0);
  EXPECT_THROW(fisher_exact_two_sided({0, 0, 0, 0}), DataError);
  EXPECT_THROW(fisher_exact_two_sided({-1, 2, 3, 4}), DataError);
}

TEST(Recommend, DiscreteArchitectureColumn) {
  const std::map<std::string, double> aurocs = {
      {"reversal_rate", 0.93},         {"jerk_rms", 0.88},        {"momentum_coherence", 0.86},
      {"spectral_energy_ratio", 0.75}, {"total_variation", 0.89}, {"velocity_violations", 0.69},
      {"stall_rate", 0.49}};
  const auto rec = recommend_monitors(aurocs);
  EXPECT_EQ(rec.primary,
            (std::vector<std::string>{"jerk_rms", "momentum_coherence", "reversal_rate", "total_variation"}));
  EXPECT_EQ(rec.secondary, (std::vector<std::string>{"spectral_energy_ratio", "velocity_violations"}));
  EXPECT_EQ(rec.avoid, (std::vector<std::string>{"stall_rate"}));
}

TEST(Recommend, ContinuousArchitectureColumn) {
  const std::map<std::string, double> aurocs = {
      {"reversal_rate", 0.79},         {"jerk_rms", 0.41},        {"momentum_coherence", 0.70},
      {"spectral_energy_ratio", 0.34}, {"total_variation", 0.71}, {"velocity_violations", 0.41},
      {"stall_rate", 0.50}};
  const auto rec = recommend_monitors(aurocs);
  EXPECT_EQ(rec.primary, (std::vector<std::string>{"reversal_rate"}));
  EXPECT_EQ(rec.secondary, (std::vector<std::string>{"momentum_coherence", "total_variation"}));
  EXPECT_EQ(rec.avoid.size(), 4u);
}

TEST(Recommend, Buckets) {
  auto rec = recommend_monitors({{"a", 0.5}, {"b", 0.5}});
  EXPECT_EQ(rec.avoid.size(), 2u);
  EXPECT_TRUE(rec.primary.empty());
  rec = recommend_monitors({{"only", 0.9}});
  EXPECT_EQ(rec.primary, std::vector<std::string>{"only"});
  EXPECT_TRUE(rec.secondary.empty() && rec.avoid.empty() && rec.unclassified.empty());
  rec = recommend_monitors({{"gap", 0.62}});
  EXPECT_EQ(rec.unclassified, std::vector<std::string>{"gap"});
  rec = recommend_monitors({{"edge", 0.78}, {"mid", 0.65}, {"low", 0.60}});
  EXPECT_EQ(rec.primary, std::vector<std::string>{"edge"});
  EXPECT_EQ(rec.secondary, std::vector<std::string>{"mid"});
  EXPECT_EQ(rec.avoid, std::vector<std::string>{"low"});
}

TEST(LabeledScores, OrientationAndMissingValues) {
  std::vector<MetricsRow> rows = {row("a", false, "f", 0.9), row("b", true, "f", 0.1)};
  rows[0].health.momentum_coherence = -0.5;
  rows[1].health.momentum_coherence = 0.8;
  const auto coh = labeled_scores(rows, Metric::momentum_coherence);
  EXPECT_EQ(coh.scores, (std::vector<double>{0.5, -0.8}));
  EXPECT_EQ(coh.failed, (std::vector<bool>{true, false}));
  EXPECT_TRUE(labeled_scores(rows, Metric::jerk_rms).scores.empty());
}

TEST(EvaluationReport, ScoresGroupsAndFisher) {
  MetricsTable t;
  for (int i = 0; i < 10; ++i) {
    t.rows.push_back(row("d" + std::to_string(i), i < 6, "discrete", i < 6 ? 0.1 * i : 0.9 + 0.01 * i));
    t.rows.push_back(row("s" + std::to_string(i), i < 6, "smooth", 0.5));
  }
  EvaluationConfig cfg;
  cfg.n_boot = 200;
  cfg.seed = 9;
  cfg.fisher.push_back({"paper", {116, 84, 114, 86}, 0.0});
  const auto rep = evaluation_report(t, cfg);
  EXPECT_EQ(rep.overall.n, 20u);
  EXPECT_EQ(rep.overall.n_failed, 8u);
  ASSERT_EQ(rep.by_family.size(), 2u);
  EXPECT_EQ(rep.by_family[0].group, "discrete");
  EXPECT_EQ(rep.by_family[0].metrics[0].auroc, 1.0);
  EXPECT_EQ(rep.by_family[1].metrics[0].auroc, 0.5);
  EXPECT_EQ(rep.by_family[0].recommendation.primary, std::vector<std::string>{"reversal_rate"});
  // metrics with no values are reported, not dropped
  EXPECT_EQ(rep.overall.metrics.size(), kAllMetrics.size());
  EXPECT_FALSE(rep.overall.metrics[1].auroc);
  EXPECT_FALSE(rep.overall.metrics[1].note.empty());
  ASSERT_EQ(rep.fisher_tests.size(), 1u);
  EXPECT_NEAR(rep.fisher_tests[0].p, 0.9194542945071446, 1e-10);
}

TEST(EvaluationReport, MissingColumnMarkedUnavailable) {
  MetricsTable t;
  for (int i = 0; i < 6; ++i) t.rows.push_back(row("e" + std::to_string(i), i % 2 == 0, "f", i));
  t.present[0] = false;
  EvaluationConfig cfg;
  cfg.n_boot = 100;
  const auto rep = evaluation_report(t, cfg);
  EXPECT_FALSE(rep.overall.metrics[0].auroc);
  EXPECT_NE(rep.overall.metrics[0].note.find("column missing"), std::string::npos);
}

TEST(EvaluationReport, UnlabeledRowsWarnDuplicatesThrow) {
  MetricsTable t;
  for (int i = 0; i < 6; ++i) t.rows.push_back(row("e" + std::to_string(i), i % 2 == 0, "f", i));
  t.rows[5].success.reset();
  EvaluationConfig cfg;
  cfg.n_boot = 100;
  const auto rep = evaluation_report(t, cfg);
  EXPECT_EQ(rep.overall.n, 5u);
  EXPECT_EQ(rep.warnings.size(), 1u);
  t.rows.push_back(t.rows[0]);
  EXPECT_THROW(evaluation_report(t, cfg), DataError);
}

TEST(EvaluationReport, ExternalLabels) {
  MetricsTable t;
  for (int i = 0; i < 4; ++i) {
    t.rows.push_back(row("e" + std::to_string(i), true, "f", i));
    t.rows.back().success.reset();
  }
  EvaluationConfig cfg;
  cfg.n_boot = 100;
  const std::map<std::string, bool> labels = {{"e0", true}, {"e1", true}, {"e2", false}, {"e3", false}};
  EXPECT_EQ(evaluation_report(t, labels, cfg).overall.metrics[0].auroc, 1.0);
  auto extra = labels;
  extra["ghost"] = true;
  EXPECT_THROW(evaluation_report(t, extra, cfg), DataError);
  auto missing = labels;
  missing.erase("e3");
  EXPECT_THROW(evaluation_report(t, missing, cfg), DataError);
}
