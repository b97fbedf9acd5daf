#include "actguard/evalstats.hpp"

#include "actguard/order_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace actguard {

double auroc(std::span<const double> failures, std::span<const double> successes) {
  const std::size_t n1 = failures.size(), n0 = successes.size();
  if (n1 == 0 || n0 == 0) throw DataError("auroc undefined: both failures and successes are required");

  struct Item {
    double v;
    bool failed;
  };
  std::vector<Item> items;
  items.reserve(n1 + n0);
  for (double v : failures) items.push_back({v, true});
  for (double v : successes) items.push_back({v, false});
  for (const auto& it : items) {
    if (std::isnan(it.v)) throw DataError("auroc: NaN score");
  }
  std::sort(items.begin(), items.end(), [](const Item& x, const Item& y) { return x.v < y.v; });

  // Midranks, doubled so every rank is an integer.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t k = i;
    while (k < items.size() && items[k].v == items[i].v) ++k;
    const double twice_mid = static_cast<double>(i + 1 + k);  // (i+1) + k
    for (std::size_t m = i; m < k; ++m) {
      if (items[m].failed) twice_rank_sum += twice_mid;
    }
    i = k;
  }
  const double n1d = static_cast<double>(n1);
  const double u = twice_rank_sum / 2.0 - n1d * (n1d + 1.0) / 2.0;
  return u / (n1d * static_cast<double>(n0));
}

namespace {

void split_by_label(const LabeledScores& data, std::vector<double>& fail, std::vector<double>& ok) {
  if (data.scores.size() != data.failed.size()) throw DataError("scores and labels differ in length");
  for (std::size_t i = 0; i < data.scores.size(); ++i) (data.failed[i] ? fail : ok).push_back(data.scores[i]);
}

}  // namespace

double auroc(const LabeledScores& data) {
  std::vector<double> fail, ok;
  split_by_label(data, fail, ok);
  return auroc(fail, ok);
}

ConfidenceInterval bootstrap_auroc_ci(const LabeledScores& data, int n_boot, double level, std::uint64_t seed) {
  if (n_boot < 100) throw ConfigError("bootstrap needs n_boot >= 100");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("bootstrap level must lie in (0, 1)");
  std::vector<double> fail, ok;
  split_by_label(data, fail, ok);
  if (fail.empty() || ok.empty()) throw DataError("auroc undefined: both failures and successes are required");

  std::vector<double> stats(static_cast<std::size_t>(n_boot));
  std::vector<double> rf(fail.size()), ro(ok.size());
  for (int b = 0; b < n_boot; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick_f(0, fail.size() - 1), pick_o(0, ok.size() - 1);
    for (auto& v : rf) v = fail[pick_f(rng)];
    for (auto& v : ro) v = ok[pick_o(rng)];
    stats[static_cast<std::size_t>(b)] = auroc(rf, ro);
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0 * 100.0;
  return {percentile_sorted<double>(stats, tail), percentile_sorted<double>(stats, 100.0 - tail)};
}

double fisher_exact_two_sided(const ContingencyTable2x2& t) {
  if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) throw DataError("contingency table entries must be non-negative");
  const std::int64_t row1 = t.a + t.b, row2 = t.c + t.d;
  const std::int64_t col1 = t.a + t.c, col2 = t.b + t.d;
  const std::int64_t n = row1 + row2;
  if (n == 0) throw DataError("contingency table is empty");
  if (row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0) return 1.0;

  const auto lchoose = [](std::int64_t m, std::int64_t k) {
    return std::lgamma(static_cast<double>(m) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(m - k) + 1.0);
  };
  const double log_denom = lchoose(n, col1);
  const auto log_p = [&](std::int64_t x) { return lchoose(row1, x) + lchoose(row2, col1 - x) - log_denom; };

  const double observed = log_p(t.a);
  // Relative tolerance 1e-7 on the probability comparison.
  const double cutoff = observed + std::log1p(1e-7);
  const std::int64_t lo = std::max<std::int64_t>(0, col1 - row2);
  const std::int64_t hi = std::min(row1, col1);
  double p = 0.0;
  for (std::int64_t x = lo; x <= hi; ++x) {
    const double lp = log_p(x);
    if (lp <= cutoff) p += std::exp(lp);
  }
  return std::min(1.0, p);
}

MonitorRecommendation recommend_monitors(const std::map<std::string, double>& auroc_by_metric,
                                         const RecommendationThresholds& thresholds) {
  MonitorRecommendation rec;
  rec.thresholds = thresholds;
  // std::map iterates in name order, so each list comes out sorted.
  for (const auto& [name, value] : auroc_by_metric) {
    if (value >= thresholds.primary) {
      rec.primary.push_back(name);
    } else if (value >= thresholds.secondary) {
      rec.secondary.push_back(name);
    } else if (value <= thresholds.avoid) {
      rec.avoid.push_back(name);
    } else {
      rec.unclassified.push_back(name);
    }
  }
  return rec;
}

LabeledScores labeled_scores(std::span<const MetricsRow> rows, Metric metric) {
  LabeledScores out;
  const double sign = metric_orientation(metric);
  for (const auto& row : rows) {
    if (!row.success) continue;
    const auto v = metric_value(row.health, metric);
    if (!v) continue;
    out.scores.push_back(sign * *v);
    out.failed.push_back(!*row.success);
  }
  return out;
}

namespace {

GroupEvaluation evaluate_group(std::string name, std::span<const MetricsRow> rows, const MetricsTable& table,
                               const EvaluationConfig& config) {
  GroupEvaluation g;
  g.group = std::move(name);
  for (const auto& r : rows) {
    if (!r.success) continue;
    ++g.n;
    g.n_failed += *r.success ? 0 : 1;
  }
  std::map<std::string, double> aurocs;
  for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
    const Metric m = kAllMetrics[k];
    MetricScore s;
    s.name = std::string(metric_name(m));
    s.orientation = metric_orientation(m);
    if (!table.present[k]) {
      s.note = "unavailable: column missing";
      g.metrics.push_back(std::move(s));
      continue;
    }
    const auto data = labeled_scores(rows, m);
    for (bool f : data.failed) (f ? s.n_failed : s.n_success) += 1;
    if (s.n_failed == 0 || s.n_success == 0) {
      s.note = data.scores.empty() ? "unavailable: no values" : "unavailable: single class";
    } else {
      s.auroc = auroc(data);
      s.ci = bootstrap_auroc_ci(data, config.n_boot, config.level, config.seed);
      aurocs[s.name] = *s.auroc;
    }
    g.metrics.push_back(std::move(s));
  }
  g.recommendation = recommend_monitors(aurocs, config.thresholds);
  return g;
}

}  // namespace

EvaluationReport evaluation_report(const MetricsTable& table, const EvaluationConfig& config) {
  EvaluationReport rep;
  rep.n_boot = config.n_boot;
  rep.level = config.level;
  rep.seed = config.seed;

  std::size_t unlabeled = 0;
  std::set<std::string> ids;
  for (const auto& r : table.rows) {
    if (!r.success) ++unlabeled;
    if (!ids.insert(r.episode_id).second) throw DataError("duplicate episode_id '" + r.episode_id + "'");
  }
  if (unlabeled > 0) {
    rep.warnings.push_back(std::to_string(unlabeled) + " episode(s) without a success label were skipped");
  }

  rep.overall = evaluate_group("all", table.rows, table, config);

  std::map<std::string, std::vector<MetricsRow>> families;
  for (const auto& r : table.rows) {
    if (r.family) families[*r.family].push_back(r);
  }
  if (families.size() > 1) {
    for (const auto& [fam, rows] : families) rep.by_family.push_back(evaluate_group(fam, rows, table, config));
  }

  for (auto f : config.fisher) {
    f.p = fisher_exact_two_sided(f.table);
    rep.fisher_tests.push_back(std::move(f));
  }
  return rep;
}

EvaluationReport evaluation_report(const MetricsTable& table, const std::map<std::string, bool>& success_by_id,
                                   const EvaluationConfig& config) {
  MetricsTable labeled = table;
  for (auto& r : labeled.rows) {
    const auto it = success_by_id.find(r.episode_id);
    if (it == success_by_id.end()) throw DataError("no label for episode_id '" + r.episode_id + "'");
    r.success = it->second;
  }
  if (success_by_id.size() != labeled.rows.size()) {
    for (const auto& [id, _] : success_by_id) {
      const bool found = std::any_of(labeled.rows.begin(), labeled.rows.end(),
                                     [&](const MetricsRow& r) { return r.episode_id == id; });
      if (!found) throw DataError("label for unknown episode_id '" + id + "'");
    }
  }
  return evaluation_report(labeled, config);
}

}  // namespace actguard
