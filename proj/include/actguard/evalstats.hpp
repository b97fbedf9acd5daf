#pragma once

#include "actguard/monitors.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace actguard {

/// Metric values (orientation already applied) with parallel failure labels.
struct LabeledScores {
  std::vector<double> scores;
  std::vector<bool> failed;
};

/// P(score of a random failure > score of a random success), ties counted
/// one half. Exact rank-sum computation.
double auroc(std::span<const double> failures, std::span<const double> successes);
double auroc(const LabeledScores& data);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap with class-stratified resampling. Resample b draws
/// from its own generator seeded by (seed, b), so the result does not depend
/// on evaluation order.
ConfidenceInterval bootstrap_auroc_ci(const LabeledScores& data, int n_boot = 1000, double level = 0.95,
                                      std::uint64_t seed = 0);

/// Rows are conditions, columns are (success, failure):
///   | a b |
///   | c d |
struct ContingencyTable2x2 {
  std::int64_t a = 0, b = 0, c = 0, d = 0;
};

/// Two-sided Fisher exact test: total hypergeometric mass of tables (fixed
/// margins) no more probable than the observed one. 1.0 for a zero margin.
double fisher_exact_two_sided(const ContingencyTable2x2& table);

struct RecommendationThresholds {
  double primary = 0.78;    // AUROC >= primary
  double secondary = 0.65;  // secondary <= AUROC < primary
  double avoid = 0.60;      // AUROC <= avoid
};

struct MonitorRecommendation {
  std::vector<std::string> primary;
  std::vector<std::string> secondary;
  std::vector<std::string> avoid;
  std::vector<std::string> unclassified;
  RecommendationThresholds thresholds;
};

/// Buckets metrics by AUROC; each list is sorted by metric name.
MonitorRecommendation recommend_monitors(const std::map<std::string, double>& auroc_by_metric,
                                         const RecommendationThresholds& thresholds = {});

struct MetricsRow {
  std::string episode_id;
  std::optional<std::string> family;
  std::optional<bool> success;
  HealthReport health;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  /// Per kAllMetrics entry: false when the source table lacked the column.
  std::array<bool, kAllMetrics.size()> present{true, true, true, true, true, true, true, true};

  friend bool operator==(const MetricsTable&, const MetricsTable&) = default;
};

struct MetricScore {
  std::string name;
  int orientation = 1;
  std::optional<double> auroc;
  std::optional<ConfidenceInterval> ci;
  std::size_t n_failed = 0;
  std::size_t n_success = 0;
  std::string note;
};

struct GroupEvaluation {
  std::string group;
  std::size_t n = 0;
  std::size_t n_failed = 0;
  std::vector<MetricScore> metrics;
  MonitorRecommendation recommendation;
};

struct FisherTest {
  std::string label;
  ContingencyTable2x2 table;
  double p = 1.0;
};

struct EvaluationConfig {
  int n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  RecommendationThresholds thresholds;
  std::vector<FisherTest> fisher;  // p is filled in by the report
};

struct EvaluationReport {
  GroupEvaluation overall;
  std::vector<GroupEvaluation> by_family;
  std::vector<FisherTest> fisher_tests;
  int n_boot = 0;
  double level = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Scores every metric as a failure predictor over the whole table and per
/// family (when more than one family is present). Rows without a success
/// label are skipped with a warning.
EvaluationReport evaluation_report(const MetricsTable& table, const EvaluationConfig& config);

/// Same, with labels supplied separately by episode_id (true = success).
/// Every row must have a label and every label a row.
EvaluationReport evaluation_report(const MetricsTable& table, const std::map<std::string, bool>& success_by_id,
                                   const EvaluationConfig& config);

/// Scores for one metric over labelled rows, orientation applied; rows with
/// a missing value are dropped.
LabeledScores labeled_scores(std::span<const MetricsRow> rows, Metric metric);

}  // namespace actguard
