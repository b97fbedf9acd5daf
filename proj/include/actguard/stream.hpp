#pragma once

#include "actguard/conformal.hpp"
#include "actguard/contracts.hpp"
#include "actguard/drift.hpp"
#include "actguard/monitors.hpp"

#include <cstdint>
#include <optional>

namespace actguard {

struct StreamStep {
  std::size_t new_violations = 0;
  /// Score and p-value of the raw action; empty when the contract carries no
  /// score model.
  std::optional<double> score;
  std::optional<double> p;
  double cusum = 0.0;
  bool alarmed = false;
};

/// Per-stream pipeline: enforce, score the raw action against the contract's
/// calibration scores, advance CUSUM, and feed the health accumulator with
/// the raw action.
template <typename Scalar>
class StreamMonitor {
 public:
  using VectorType = Vector<Scalar>;

  StreamMonitor(SafetyContract<Scalar> contract, MonitorConfig monitor_config, double cusum_alpha,
                double cusum_h)
      : guard_(std::move(contract)),
        health_(guard_.dims(), monitor_config),
        cusum_(CusumState::make(cusum_alpha, cusum_h)) {}

  /// Preallocates for episodes of up to `steps` actions so that step() does
  /// not touch the heap.
  void reserve(std::size_t steps) { reserve(steps, steps * static_cast<std::size_t>(guard_.dims()) * 3); }

  /// Same, with an explicit bound on the number of violation records.
  void reserve(std::size_t steps, std::size_t log_records) {
    health_.reserve(steps);
    guard_.reserve_log(log_records);
  }

  StreamStep step(const Eigen::Ref<const VectorType>& raw, Eigen::Ref<VectorType> safe) {
    StreamStep out;
    // Everything that reads raw runs before enforcement: safe may alias raw.
    guard_check(raw);
    if (const auto& model = guard_.contract().score_model) {
      const Scalar score = nonconformity_score(raw, model->center, model->scale);
      out.score = static_cast<double>(score);
      out.p = conformal_pvalue<Scalar>(score, model->sorted_scores);
    }
    health_.push(raw);
    const auto fresh = guard_.enforce_into(raw, safe);
    out.new_violations = fresh.size();
    for (const auto& v : fresh) velocity_violations_ += v.kind == ViolationKind::velocity ? 1 : 0;
    if (out.p) cusum_ = cusum_step(cusum_, *out.p);
    out.cusum = cusum_.s;
    out.alarmed = cusum_.alarmed;
    return out;
  }

  /// Health report for the current episode.
  HealthReport finalize_episode() const { return health_.finalize(velocity_violations_); }

  /// Episode boundary for guard, detector and accumulator.
  void reset() {
    guard_.reset();
    health_.reset();
    cusum_.reset();
    velocity_violations_ = 0;
  }

  const SafetyGuard<Scalar>& guard() const { return guard_; }
  const CusumState& cusum() const { return cusum_; }
  const HealthAccumulator<Scalar>& health() const { return health_; }
  bool scores_enabled() const { return guard_.contract().score_model.has_value(); }

 private:
  void guard_check(const Eigen::Ref<const VectorType>& raw) const {
    if (raw.size() != guard_.dims()) {
      throw DataError("action has " + std::to_string(raw.size()) + " components, contract expects " +
                      std::to_string(guard_.dims()));
    }
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
      if (!std::isfinite(raw[j])) {
        throw DataError("non-finite action component at joint " + std::to_string(j) + "; action rejected");
      }
    }
  }

  SafetyGuard<Scalar> guard_;
  HealthAccumulator<Scalar> health_;
  CusumState cusum_;
  std::int64_t velocity_violations_ = 0;
};

}  // namespace actguard
