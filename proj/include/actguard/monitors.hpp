#pragma once

#include "actguard/core.hpp"
#include "actguard/order_stats.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace actguard {

enum class ReversalMode {
  /// Sign flips of consecutive deltas (direction of motion).
  delta_sign,
  /// Sign flips of the raw action values themselves.
  value_sign,
};

struct MonitorConfig {
  double reversal_deadband = 1e-6;
  ReversalMode reversal_mode = ReversalMode::delta_sign;
  double coherence_epsilon = 1e-9;
  /// Low band is every non-DC bin at or below this fraction of Nyquist.
  double spectral_cutoff_fraction = 0.1;
  double stall_tau = 1e-3;
  int stall_min_run = 5;
  double jerk_threshold = 1.0;

  void validate() const {
    if (!(reversal_deadband >= 0.0)) throw ConfigError("reversal_deadband must be non-negative");
    if (!(coherence_epsilon > 0.0)) throw ConfigError("coherence_epsilon must be positive");
    if (!(spectral_cutoff_fraction > 0.0 && spectral_cutoff_fraction <= 1.0)) {
      throw ConfigError("spectral_cutoff_fraction must lie in (0, 1]");
    }
    if (!(stall_tau > 0.0)) throw ConfigError("stall_tau must be positive");
    if (stall_min_run < 1) throw ConfigError("stall_min_run must be at least 1");
    if (!(jerk_threshold > 0.0)) throw ConfigError("jerk_threshold must be positive");
  }
};

/// Per-episode health metrics. An empty optional marks a metric the episode
/// was too short to compute (or, for velocity_violations, that no contract
/// was supplied).
struct HealthReport {
  std::optional<double> reversal_rate;
  std::optional<double> jerk_rms;
  std::optional<std::int64_t> jerk_violations;
  std::optional<double> momentum_coherence;
  /// Every consecutive delta pair was below coherence_epsilon.
  bool coherence_degenerate = false;
  std::optional<double> spectral_energy_ratio;
  std::optional<double> total_variation;
  std::optional<std::int64_t> stall_steps;
  std::optional<double> stall_rate;
  std::optional<std::int64_t> velocity_violations;
  std::int64_t episode_len = 0;

  friend bool operator==(const HealthReport&, const HealthReport&) = default;
};

/// Metrics scored for failure prediction, in report order.
enum class Metric {
  reversal_rate,
  jerk_rms,
  jerk_violations,
  momentum_coherence,
  spectral_energy_ratio,
  total_variation,
  stall_rate,
  velocity_violations,
};

inline constexpr std::array<Metric, 8> kAllMetrics = {
    Metric::reversal_rate,         Metric::jerk_rms,        Metric::jerk_violations,
    Metric::momentum_coherence,    Metric::spectral_energy_ratio, Metric::total_variation,
    Metric::stall_rate,            Metric::velocity_violations};

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::reversal_rate: return "reversal_rate";
    case Metric::jerk_rms: return "jerk_rms";
    case Metric::jerk_violations: return "jerk_violations";
    case Metric::momentum_coherence: return "momentum_coherence";
    case Metric::spectral_energy_ratio: return "spectral_energy_ratio";
    case Metric::total_variation: return "total_variation";
    case Metric::stall_rate: return "stall_rate";
    case Metric::velocity_violations: return "velocity_violations";
  }
  return "";
}

/// +1: larger values are more failure-like. -1: the metric is negated
/// before scoring (momentum coherence: straight motion is healthy).
inline int metric_orientation(Metric m) { return m == Metric::momentum_coherence ? -1 : 1; }

inline std::optional<double> metric_value(const HealthReport& r, Metric m) {
  const auto as_double = [](const std::optional<std::int64_t>& v) -> std::optional<double> {
    if (!v) return std::nullopt;
    return static_cast<double>(*v);
  };
  switch (m) {
    case Metric::reversal_rate: return r.reversal_rate;
    case Metric::jerk_rms: return r.jerk_rms;
    case Metric::jerk_violations: return as_double(r.jerk_violations);
    case Metric::momentum_coherence: return r.momentum_coherence;
    case Metric::spectral_energy_ratio: return r.spectral_energy_ratio;
    case Metric::total_variation: return r.total_variation;
    case Metric::stall_rate: return r.stall_rate;
    case Metric::velocity_violations: return as_double(r.velocity_violations);
  }
  return std::nullopt;
}

namespace detail {

inline void require_length(Eigen::Index rows, Eigen::Index min_rows, const char* what) {
  if (rows < min_rows) {
    throw DataError(std::string(what) + ": episode too short (" + std::to_string(rows) + " steps, need " +
                    std::to_string(min_rows) + ")");
  }
}

// The kernels below are shared by the batch functions and the streaming
// accumulator; both visit (t, j) time-major, joint-minor, so their sums are
// bitwise identical.

template <typename Derived>
typename Derived::Scalar third_difference(const Eigen::MatrixBase<Derived>& a, Eigen::Index t,
                                          Eigen::Index j) {
  using S = typename Derived::Scalar;
  return a(t + 3, j) - S(3) * a(t + 2, j) + S(3) * a(t + 1, j) - a(t, j);
}

template <typename Derived>
bool reverses(const Eigen::MatrixBase<Derived>& a, Eigen::Index t, Eigen::Index j, double deadband,
              ReversalMode mode) {
  // t indexes the middle sample of the window a[t-1], a[t], a[t+1].
  if (mode == ReversalMode::value_sign) {
    const auto prev = a(t - 1, j);
    const auto cur = a(t, j);
    return prev * cur < 0 && std::abs(prev) > deadband && std::abs(cur) > deadband;
  }
  const auto d0 = a(t, j) - a(t - 1, j);
  const auto d1 = a(t + 1, j) - a(t, j);
  return d0 * d1 < 0 && std::abs(d0) > deadband && std::abs(d1) > deadband;
}

/// Cosine between a[t+1]-a[t] and a[t+2]-a[t+1]; nullopt when either delta
/// norm is below epsilon.
template <typename Derived>
std::optional<double> delta_cosine(const Eigen::MatrixBase<Derived>& a, Eigen::Index t, double epsilon) {
  using S = typename Derived::Scalar;
  S dot = 0, n0 = 0, n1 = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const S d0 = a(t + 1, j) - a(t, j);
    const S d1 = a(t + 2, j) - a(t + 1, j);
    dot += d0 * d1;
    n0 += d0 * d0;
    n1 += d1 * d1;
  }
  const double l0 = std::sqrt(static_cast<double>(n0));
  const double l1 = std::sqrt(static_cast<double>(n1));
  if (l0 < epsilon || l1 < epsilon) return std::nullopt;
  return std::clamp(static_cast<double>(dot) / (l0 * l1), -1.0, 1.0);
}

template <typename Derived>
double displacement(const Eigen::MatrixBase<Derived>& a, Eigen::Index t) {
  using S = typename Derived::Scalar;
  S ss = 0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const S d = a(t + 1, j) - a(t, j);
    ss += d * d;
  }
  return std::sqrt(static_cast<double>(ss));
}

}  // namespace detail

/// Fraction of interior (t, j) pairs whose motion direction flips. Deltas
/// at or below `deadband` count as no motion.
template <typename Derived>
double reversal_rate(const Eigen::MatrixBase<Derived>& actions, double deadband,
                     ReversalMode mode = ReversalMode::delta_sign) {
  const Eigen::Index T = actions.rows(), D = actions.cols();
  detail::require_length(T, 3, "reversal_rate");
  std::int64_t count = 0;
  Eigen::Index first = 1, last = T - 1;  // middle-sample range, exclusive end
  if (mode == ReversalMode::value_sign) last = T;
  for (Eigen::Index t = first; t < last; ++t) {
    for (Eigen::Index j = 0; j < D; ++j) count += detail::reverses(actions, t, j, deadband, mode) ? 1 : 0;
  }
  return static_cast<double>(count) / static_cast<double>((last - first) * D);
}

/// RMS of the unit-timestep third difference over all (t, j).
template <typename Derived>
double jerk_rms(const Eigen::MatrixBase<Derived>& actions) {
  const Eigen::Index T = actions.rows(), D = actions.cols();
  detail::require_length(T, 4, "jerk_rms");
  double ss = 0.0;
  for (Eigen::Index t = 0; t + 3 < T; ++t) {
    for (Eigen::Index j = 0; j < D; ++j) {
      const double v = static_cast<double>(detail::third_difference(actions, t, j));
      ss += v * v;
    }
  }
  return std::sqrt(ss / static_cast<double>((T - 3) * D));
}

template <typename Derived>
std::int64_t jerk_violations(const Eigen::MatrixBase<Derived>& actions, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("jerk_violations: threshold must be positive");
  const Eigen::Index T = actions.rows(), D = actions.cols();
  detail::require_length(T, 4, "jerk_violations");
  std::int64_t count = 0;
  for (Eigen::Index t = 0; t + 3 < T; ++t) {
    for (Eigen::Index j = 0; j < D; ++j) {
      count += std::abs(static_cast<double>(detail::third_difference(actions, t, j))) > threshold ? 1 : 0;
    }
  }
  return count;
}

struct CoherenceResult {
  double value = 0.0;
  std::int64_t pairs_used = 0;
  bool degenerate() const { return pairs_used == 0; }
};

/// Mean cosine similarity of consecutive deltas, skipping near-zero deltas.
template <typename Derived>
CoherenceResult momentum_coherence(const Eigen::MatrixBase<Derived>& actions, double epsilon) {
  const Eigen::Index T = actions.rows();
  detail::require_length(T, 3, "momentum_coherence");
  double sum = 0.0;
  std::int64_t used = 0;
  for (Eigen::Index t = 0; t + 2 < T; ++t) {
    if (const auto c = detail::delta_cosine(actions, t, epsilon)) {
      sum += *c;
      ++used;
    }
  }
  if (used == 0) return {0.0, 0};
  return {sum / static_cast<double>(used), used};
}

/// Share of non-DC spectral energy at or below cutoff_fraction x Nyquist,
/// pooled over joints (energy-weighted). A motionless signal scores 1.
template <typename Derived>
double spectral_energy_ratio(const Eigen::MatrixBase<Derived>& actions, double cutoff_fraction) {
  if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.0)) {
    throw ConfigError("spectral_energy_ratio: cutoff_fraction must lie in (0, 1]");
  }
  const Eigen::Index T = actions.rows(), D = actions.cols();
  detail::require_length(T, 4, "spectral_energy_ratio");

  Eigen::FFT<double> fft;
  std::vector<double> x(static_cast<std::size_t>(T));
  std::vector<std::complex<double>> spectrum;
  // Bin k has frequency min(k, T-k)/T cycles per step; Nyquist is 1/2.
  const double cutoff_bin = cutoff_fraction * static_cast<double>(T) / 2.0;
  double low = 0.0, total = 0.0;
  for (Eigen::Index j = 0; j < D; ++j) {
    double mean = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) mean += static_cast<double>(actions(t, j));
    mean /= static_cast<double>(T);
    for (Eigen::Index t = 0; t < T; ++t) x[static_cast<std::size_t>(t)] = static_cast<double>(actions(t, j)) - mean;
    fft.fwd(spectrum, x);
    for (Eigen::Index k = 1; k < T; ++k) {
      const double e = std::norm(spectrum[static_cast<std::size_t>(k)]);
      total += e;
      if (static_cast<double>(std::min(k, T - k)) <= cutoff_bin) low += e;
    }
  }
  if (total < 1e-12) return 1.0;
  return std::clamp(low / total, 0.0, 1.0);
}

template <typename Derived>
double total_variation(const Eigen::MatrixBase<Derived>& actions) {
  const Eigen::Index T = actions.rows(), D = actions.cols();
  detail::require_length(T, 2, "total_variation");
  double tv = 0.0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    for (Eigen::Index j = 0; j < D; ++j) tv += std::abs(static_cast<double>(actions(t + 1, j) - actions(t, j)));
  }
  return tv;
}

struct StallResult {
  std::int64_t stall_steps = 0;
  double stall_rate = 0.0;
};

/// Steps belonging to maximal runs of at least `min_run` consecutive
/// displacements below `tau`; the rate is over the T-1 displacements.
template <typename Derived>
StallResult stall_metrics(const Eigen::MatrixBase<Derived>& actions, double tau, int min_run) {
  if (!(tau > 0.0)) throw ConfigError("stall_metrics: tau must be positive");
  if (min_run < 1) throw ConfigError("stall_metrics: min_run must be at least 1");
  const Eigen::Index T = actions.rows();
  detail::require_length(T, 2, "stall_metrics");
  std::int64_t steps = 0, run = 0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    if (detail::displacement(actions, t) < tau) {
      ++run;
    } else {
      if (run >= min_run) steps += run;
      run = 0;
    }
  }
  if (run >= min_run) steps += run;
  return {steps, static_cast<double>(steps) / static_cast<double>(T - 1)};
}

/// All metrics for one episode. Metrics whose minimum length is not met are
/// left empty rather than guessed.
template <typename Derived>
HealthReport episode_health(const Eigen::MatrixBase<Derived>& actions, const MonitorConfig& config,
                            std::optional<std::int64_t> velocity_violation_count = std::nullopt) {
  config.validate();
  const Eigen::Index T = actions.rows();
  HealthReport r;
  r.episode_len = T;
  r.velocity_violations = velocity_violation_count;
  if (T >= 2) {
    r.total_variation = total_variation(actions);
    const auto stall = stall_metrics(actions, config.stall_tau, config.stall_min_run);
    r.stall_steps = stall.stall_steps;
    r.stall_rate = stall.stall_rate;
  }
  if (T >= 3) {
    r.reversal_rate = reversal_rate(actions, config.reversal_deadband, config.reversal_mode);
    const auto coh = momentum_coherence(actions, config.coherence_epsilon);
    r.momentum_coherence = coh.value;
    r.coherence_degenerate = coh.degenerate();
  }
  if (T >= 4) {
    r.jerk_rms = jerk_rms(actions);
    r.jerk_violations = jerk_violations(actions, config.jerk_threshold);
    r.spectral_energy_ratio = spectral_energy_ratio(actions, config.spectral_cutoff_fraction);
  }
  return r;
}

/// Incremental episode_health over a live stream. finalize() matches the
/// batch result on the same actions exactly. With reserve() sized for the
/// episode, push() does not allocate.
template <typename Scalar>
class HealthAccumulator {
 public:
  HealthAccumulator(Eigen::Index dims, MonitorConfig config) : dims_(dims), config_(config) {
    if (dims <= 0) throw ConfigError("HealthAccumulator: dims must be positive");
    config_.validate();
  }

  void reserve(std::size_t steps) { buffer_.reserve(steps * static_cast<std::size_t>(dims_)); }
  Eigen::Index dims() const { return dims_; }
  Eigen::Index steps() const { return rows_; }
  const MonitorConfig& config() const { return config_; }

  template <typename Derived>
  void push(const Eigen::MatrixBase<Derived>& action) {
    if (action.size() != dims_) throw DataError("HealthAccumulator: action dimension mismatch");
    for (Eigen::Index j = 0; j < dims_; ++j) buffer_.push_back(static_cast<Scalar>(action(j)));
    ++rows_;
    const auto a = view();
    const Eigen::Index t = rows_ - 1;  // index of the newest row
    if (t >= 1) {
      for (Eigen::Index j = 0; j < dims_; ++j) tv_ += std::abs(static_cast<double>(a(t, j) - a(t - 1, j)));
      if (detail::displacement(a, t - 1) < config_.stall_tau) {
        ++run_;
      } else {
        if (run_ >= config_.stall_min_run) stall_steps_ += run_;
        run_ = 0;
      }
    }
    if (t >= 2) {
      if (config_.reversal_mode == ReversalMode::delta_sign) {
        for (Eigen::Index j = 0; j < dims_; ++j) {
          reversals_ += detail::reverses(a, t - 1, j, config_.reversal_deadband, config_.reversal_mode) ? 1 : 0;
        }
      }
      if (const auto c = detail::delta_cosine(a, t - 2, config_.coherence_epsilon)) {
        coherence_sum_ += *c;
        ++coherence_pairs_;
      }
    }
    if (t >= 1 && config_.reversal_mode == ReversalMode::value_sign) {
      for (Eigen::Index j = 0; j < dims_; ++j) {
        reversals_ += detail::reverses(a, t, j, config_.reversal_deadband, config_.reversal_mode) ? 1 : 0;
      }
    }
    if (t >= 3) {
      for (Eigen::Index j = 0; j < dims_; ++j) {
        const double v = static_cast<double>(detail::third_difference(a, t - 3, j));
        jerk_ss_ += v * v;
        jerk_violations_ += std::abs(v) > config_.jerk_threshold ? 1 : 0;
      }
    }
  }

  HealthReport finalize(std::optional<std::int64_t> velocity_violation_count = std::nullopt) const {
    const Eigen::Index T = rows_;
    const Eigen::Index D = dims_;
    HealthReport r;
    r.episode_len = T;
    r.velocity_violations = velocity_violation_count;
    if (T >= 2) {
      r.total_variation = tv_;
      const std::int64_t steps = stall_steps_ + (run_ >= config_.stall_min_run ? run_ : 0);
      r.stall_steps = steps;
      r.stall_rate = static_cast<double>(steps) / static_cast<double>(T - 1);
    }
    if (T >= 3) {
      const Eigen::Index pairs = config_.reversal_mode == ReversalMode::delta_sign ? T - 2 : T - 1;
      r.reversal_rate = static_cast<double>(reversals_) / static_cast<double>(pairs * D);
      r.momentum_coherence = coherence_pairs_ == 0 ? 0.0 : coherence_sum_ / static_cast<double>(coherence_pairs_);
      r.coherence_degenerate = coherence_pairs_ == 0;
    }
    if (T >= 4) {
      r.jerk_rms = std::sqrt(jerk_ss_ / static_cast<double>((T - 3) * D));
      r.jerk_violations = jerk_violations_;
      r.spectral_energy_ratio = spectral_energy_ratio(view(), config_.spectral_cutoff_fraction);
    }
    return r;
  }

  /// Recorded actions as a T x D matrix view.
  Eigen::Map<const ActionMatrix<Scalar>> view() const { return {buffer_.data(), rows_, dims_}; }

  void reset() {
    buffer_.clear();
    rows_ = 0;
    tv_ = jerk_ss_ = coherence_sum_ = 0.0;
    reversals_ = jerk_violations_ = coherence_pairs_ = stall_steps_ = run_ = 0;
  }

 private:
  Eigen::Index dims_;
  MonitorConfig config_;
  std::vector<Scalar> buffer_;
  Eigen::Index rows_ = 0;
  double tv_ = 0.0;
  double jerk_ss_ = 0.0;
  double coherence_sum_ = 0.0;
  std::int64_t reversals_ = 0;
  std::int64_t jerk_violations_ = 0;
  std::int64_t coherence_pairs_ = 0;
  std::int64_t stall_steps_ = 0;
  std::int64_t run_ = 0;
};

/// Thresholds learned from demonstrations: jerk_threshold is the 99th
/// percentile of |third differences|, stall_tau the 1st percentile of the
/// nonzero per-step displacements (both floored at 1e-9). Exact holds are
/// left out of the tau sample; otherwise a demo set that pauses for more
/// than 1% of its steps yields a tau at the floor.
template <typename Scalar>
MonitorConfig calibrate_monitor_config(std::span<const BasicEpisode<Scalar>> demos, MonitorConfig base = {},
                                       double jerk_percentile = 99.0, double stall_percentile = 1.0) {
  std::vector<double> jerks, disp;
  for (const auto& ep : demos) {
    const auto& a = ep.actions;
    for (Eigen::Index t = 0; t + 1 < a.rows(); ++t) {
      const double d = detail::displacement(a, t);
      if (d > 0.0) disp.push_back(d);
    }
    for (Eigen::Index t = 0; t + 3 < a.rows(); ++t) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        jerks.push_back(std::abs(static_cast<double>(detail::third_difference(a, t, j))));
      }
    }
  }
  if (jerks.empty()) throw DataError("calibrate_monitor_config: no demo episode has 4 or more steps");
  base.jerk_threshold = std::max(1e-9, percentile(std::move(jerks), jerk_percentile));
  base.stall_tau = disp.empty() ? 1e-9 : std::max(1e-9, percentile(std::move(disp), stall_percentile));
  base.validate();
  return base;
}

}  // namespace actguard
