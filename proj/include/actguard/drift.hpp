#pragma once

#include "actguard/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace actguard {

/// Smoothed conformal p-value (1 + #{s_i >= score}) / (n + 1) against
/// ascending-sorted calibration scores. Ties count toward the larger p.
template <typename Scalar>
double conformal_pvalue(Scalar score, std::span<const Scalar> sorted_scores) {
  if (sorted_scores.empty()) throw DataError("conformal_pvalue: empty calibration set");
  const auto first_ge = std::lower_bound(sorted_scores.begin(), sorted_scores.end(), score);
  const auto at_least = static_cast<double>(sorted_scores.end() - first_ge);
  return (1.0 + at_least) / (static_cast<double>(sorted_scores.size()) + 1.0);
}

/// One-sided CUSUM over conformal p-values:
///   s_t = max(0, s_{t-1} + 1[p_t < alpha] - alpha), alarm when s_t > h.
struct CusumState {
  double s = 0.0;
  std::uint64_t t = 0;
  double alpha = 0.05;
  double h = 5.0;
  bool alarmed = false;
  /// 1-based step of the first alarm.
  std::optional<std::uint64_t> alarm_step;

  static CusumState make(double alpha, double h) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("cusum: alpha must lie in (0, 1)");
    if (!(h > 0.0)) throw ConfigError("cusum: threshold h must be positive");
    CusumState st;
    st.alpha = alpha;
    st.h = h;
    return st;
  }

  void reset() {
    s = 0.0;
    t = 0;
    alarmed = false;
    alarm_step.reset();
  }
};

/// Applies one recurrence step. Keeps accumulating after an alarm; only the
/// first alarm step is recorded.
inline CusumState cusum_step(CusumState state, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("cusum_step: p-value outside [0, 1]");
  state.s = std::max(0.0, state.s + (p < state.alpha ? 1.0 : 0.0) - state.alpha);
  ++state.t;
  if (!state.alarmed && state.s > state.h) {
    state.alarmed = true;
    state.alarm_step = state.t;
  }
  return state;
}

struct CusumRun {
  std::optional<std::uint64_t> alarm_step;
  std::vector<double> trajectory;
};

inline CusumRun cusum_run(std::span<const double> pvalues, double alpha, double h) {
  auto state = CusumState::make(alpha, h);
  CusumRun out;
  out.trajectory.reserve(pvalues.size());
  for (double p : pvalues) {
    state = cusum_step(state, p);
    out.trajectory.push_back(state.s);
  }
  out.alarm_step = state.alarm_step;
  return out;
}

}  // namespace actguard
