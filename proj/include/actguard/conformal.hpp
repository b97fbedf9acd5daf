#pragma once

#include "actguard/contracts.hpp"
#include "actguard/core.hpp"
#include "actguard/order_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace actguard {

struct CalibrationConfig {
  double alpha = 0.05;
  /// Fraction of episodes used to fit the location/scale model.
  double split_ratio = 0.8;
  double velocity_percentile = 99.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
    if (!(velocity_percentile > 0.0 && velocity_percentile <= 100.0)) {
      throw ConfigError("velocity_percentile must lie in (0, 100]");
    }
  }
};

/// Floor applied to per-joint scale and velocity limits, in action units.
inline constexpr double kScaleFloor = 1e-9;

template <typename Scalar>
struct CalibrationResult {
  SafetyContract<Scalar> contract;
  Vector<Scalar> center;
  Vector<Scalar> scale;
  std::vector<Scalar> calibration_scores;  // ascending
  double quantile_level = 0.0;
  Scalar score_quantile = 0;
  std::size_t n_cal = 0;
  /// 1-based order statistic selected; n_cal when the level exceeds one.
  std::size_t rank = 0;
  /// True when (1 - alpha)(1 + 1/n) > 1 and the maximum score was used.
  bool quantile_capped = false;
  std::vector<std::size_t> train_episodes;
  std::vector<std::size_t> calibration_episodes;
  std::vector<std::string> warnings;
};

/// max_j |action_j - center_j| / scale_j
template <typename DerivedA, typename DerivedC, typename DerivedS>
typename DerivedA::Scalar nonconformity_score(const Eigen::MatrixBase<DerivedA>& action,
                                              const Eigen::MatrixBase<DerivedC>& center,
                                              const Eigen::MatrixBase<DerivedS>& scale) {
  using Scalar = typename DerivedA::Scalar;
  if (action.size() != center.size() || action.size() != scale.size()) {
    throw DataError("nonconformity_score: dimension mismatch");
  }
  Scalar score = 0;
  for (Eigen::Index j = 0; j < action.size(); ++j) {
    score = std::max(score, Scalar(std::abs(action(j) - center(j)) / scale(j)));
  }
  return score;
}

/// (1 - alpha)(1 + 1/n). Values above one mean no finite order statistic
/// achieves the requested coverage with n scores.
inline double conformal_quantile_level(std::size_t n_cal, double alpha) {
  if (n_cal == 0) throw DataError("conformal quantile needs at least one calibration score");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  return (1.0 - alpha) * (1.0 + 1.0 / static_cast<double>(n_cal));
}

/// 1-based order statistic ceil((1 - alpha)(n + 1)); may exceed n.
inline std::size_t conformal_rank(std::size_t n_cal, double alpha) {
  conformal_quantile_level(n_cal, alpha);
  return std::max<std::size_t>(1, ceil_rank((1.0 - alpha) * static_cast<double>(n_cal + 1)));
}

namespace detail {

template <typename Scalar>
Eigen::Index common_dims(std::span<const BasicEpisode<Scalar>> episodes) {
  Eigen::Index dims = -1;
  for (const auto& ep : episodes) {
    if (ep.actions.rows() == 0) continue;
    if (dims < 0) {
      dims = ep.actions.cols();
    } else if (ep.actions.cols() != dims) {
      throw DataError("dimension mismatch: episode '" + ep.episode_id + "' has " +
                      std::to_string(ep.actions.cols()) + " joints, expected " + std::to_string(dims));
    }
  }
  if (dims <= 0) throw DataError("insufficient data: no actions in demonstration set");
  return dims;
}

template <typename Scalar>
Vector<Scalar> velocity_limits(std::span<const BasicEpisode<Scalar>> episodes,
                               std::span<const std::size_t> which, Eigen::Index dims,
                               double percentile_value) {
  std::vector<std::vector<Scalar>> deltas(static_cast<std::size_t>(dims));
  for (std::size_t i : which) {
    const auto& a = episodes[i].actions;
    for (Eigen::Index t = 0; t + 1 < a.rows(); ++t) {
      for (Eigen::Index j = 0; j < dims; ++j) {
        deltas[static_cast<std::size_t>(j)].push_back(std::abs(a(t + 1, j) - a(t, j)));
      }
    }
  }
  if (deltas.front().empty()) {
    throw DataError("velocity limits need at least one episode with two or more timesteps");
  }
  Vector<Scalar> vmax(dims);
  for (Eigen::Index j = 0; j < dims; ++j) {
    vmax[j] = std::max(Scalar(kScaleFloor), percentile(std::move(deltas[static_cast<std::size_t>(j)]),
                                                       percentile_value));
  }
  return vmax;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace detail

/// Per-joint nearest-rank percentile of |a[t+1] - a[t]| pooled over episodes,
/// floored at kScaleFloor.
template <typename Scalar>
Vector<Scalar> velocity_limits_from_demos(std::span<const BasicEpisode<Scalar>> episodes,
                                          double percentile_value) {
  const Eigen::Index dims = detail::common_dims(episodes);
  const auto idx = detail::all_indices(episodes.size());
  return detail::velocity_limits<Scalar>(episodes, idx, dims, percentile_value);
}

/// Split-conformal contract calibration. Episodes (not timesteps) are
/// shuffled by seed and split; the training side fixes a per-joint median and
/// MAD, the calibration side supplies scores whose conformal quantile q gives
/// bounds center +- q * scale.
template <typename Scalar>
CalibrationResult<Scalar> split_calibrate(std::span<const BasicEpisode<Scalar>> demos,
                                          const CalibrationConfig& config) {
  config.validate();
  const std::size_t n_ep = demos.size();
  if (n_ep < 2) throw DataError("insufficient data: split calibration needs at least 2 episodes");
  const Eigen::Index dims = detail::common_dims(demos);

  std::vector<std::size_t> order = detail::all_indices(n_ep);
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::clamp<long long>(
      std::llround(config.split_ratio * static_cast<double>(n_ep)), 1, static_cast<long long>(n_ep) - 1));

  CalibrationResult<Scalar> out;
  out.train_episodes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.calibration_episodes.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train_episodes.begin(), out.train_episodes.end());
  std::sort(out.calibration_episodes.begin(), out.calibration_episodes.end());

  out.center.resize(dims);
  out.scale.resize(dims);
  std::vector<Scalar> column;
  for (Eigen::Index j = 0; j < dims; ++j) {
    column.clear();
    for (std::size_t i : out.train_episodes) {
      const auto& a = demos[i].actions;
      for (Eigen::Index t = 0; t < a.rows(); ++t) column.push_back(a(t, j));
    }
    if (column.empty()) throw DataError("insufficient data: training split has no actions");
    const Scalar med = median_inplace(column);
    for (auto& v : column) v = std::abs(v - med);
    Scalar mad = median_inplace(column);
    if (!(mad > Scalar(kScaleFloor))) {
      out.warnings.push_back("joint " + std::to_string(j) +
                             " has zero spread in training demos; scale floored at 1e-9");
      mad = Scalar(kScaleFloor);
    }
    out.center[j] = med;
    out.scale[j] = mad;
  }

  for (std::size_t i : out.calibration_episodes) {
    const auto& a = demos[i].actions;
    for (Eigen::Index t = 0; t < a.rows(); ++t) {
      out.calibration_scores.push_back(nonconformity_score(a.row(t).transpose(), out.center, out.scale));
    }
  }
  out.n_cal = out.calibration_scores.size();
  if (out.n_cal == 0) throw DataError("insufficient data: calibration split has no actions");
  std::sort(out.calibration_scores.begin(), out.calibration_scores.end());

  out.quantile_level = conformal_quantile_level(out.n_cal, config.alpha);
  const std::size_t rank = conformal_rank(out.n_cal, config.alpha);
  if (rank > out.n_cal) {
    out.quantile_capped = true;
    out.rank = out.n_cal;
    out.warnings.push_back("insufficient calibration scores for alpha=" + std::to_string(config.alpha) +
                           " (n_cal=" + std::to_string(out.n_cal) + "); using the maximum score");
  } else {
    out.rank = rank;
  }
  out.score_quantile = out.calibration_scores[out.rank - 1];

  auto& c = out.contract;
  c.dims = dims;
  c.lower = out.center - out.score_quantile * out.scale;
  c.upper = out.center + out.score_quantile * out.scale;
  c.v_max = detail::velocity_limits<Scalar>(demos, out.train_episodes, dims, config.velocity_percentile);
  c.provenance = Provenance::conformal;
  c.calibration = {{"alpha", config.alpha},
                   {"split_ratio", config.split_ratio},
                   {"velocity_percentile", config.velocity_percentile},
                   {"seed", static_cast<double>(config.seed)},
                   {"n_cal", static_cast<double>(out.n_cal)},
                   {"quantile_level", out.quantile_level},
                   {"score_quantile", static_cast<double>(out.score_quantile)}};
  c.score_model = ScoreModel<Scalar>{out.center, out.scale, out.calibration_scores};
  return out;
}

/// Baseline contract mean +- k * sigma per joint (population sigma).
template <typename Scalar>
SafetyContract<Scalar> sigma_bounds(std::span<const BasicEpisode<Scalar>> demos, double k,
                                    double velocity_percentile = 99.0) {
  if (!(k > 0.0)) throw ConfigError("sigma_bounds: k must be positive");
  if (demos.empty()) throw DataError("sigma_bounds: empty demonstration set");
  const Eigen::Index dims = detail::common_dims(demos);

  Vector<Scalar> sum = Vector<Scalar>::Zero(dims);
  std::size_t n = 0;
  for (const auto& ep : demos) {
    for (Eigen::Index t = 0; t < ep.actions.rows(); ++t) {
      for (Eigen::Index j = 0; j < dims; ++j) sum[j] += ep.actions(t, j);
      ++n;
    }
  }
  const Vector<Scalar> mean = sum / static_cast<Scalar>(n);
  Vector<Scalar> ss = Vector<Scalar>::Zero(dims);
  for (const auto& ep : demos) {
    for (Eigen::Index t = 0; t < ep.actions.rows(); ++t) {
      for (Eigen::Index j = 0; j < dims; ++j) {
        const Scalar d = ep.actions(t, j) - mean[j];
        ss[j] += d * d;
      }
    }
  }
  const Vector<Scalar> sigma = (ss / static_cast<Scalar>(n)).cwiseSqrt();

  SafetyContract<Scalar> c;
  c.dims = dims;
  c.lower = mean - Scalar(k) * sigma;
  c.upper = mean + Scalar(k) * sigma;
  c.v_max = velocity_limits_from_demos(demos, velocity_percentile);
  c.provenance = Provenance::sigma_heuristic;
  c.calibration = {{"k", k}, {"velocity_percentile", velocity_percentile}};
  return c;
}

/// Fraction of action vectors inside the bounds on every joint.
template <typename Scalar>
double holdout_coverage(const SafetyContract<Scalar>& contract,
                        std::span<const BasicEpisode<Scalar>> episodes) {
  std::size_t inside = 0, total = 0;
  for (const auto& ep : episodes) {
    if (ep.actions.rows() > 0 && ep.actions.cols() != contract.dims) {
      throw DataError("holdout_coverage: episode '" + ep.episode_id + "' dimension mismatch");
    }
    for (Eigen::Index t = 0; t < ep.actions.rows(); ++t) {
      bool ok = true;
      for (Eigen::Index j = 0; j < contract.dims && ok; ++j) {
        const Scalar v = ep.actions(t, j);
        ok = v >= contract.lower[j] && v <= contract.upper[j];
      }
      inside += ok ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw DataError("holdout_coverage: no actions to evaluate");
  return static_cast<double>(inside) / static_cast<double>(total);
}

/// Mean over joints of width(a) / width(b); joints where b has zero width are
/// skipped and reported through `warnings`.
template <typename Scalar>
double width_ratio(const SafetyContract<Scalar>& a, const SafetyContract<Scalar>& b,
                   std::vector<std::string>* warnings = nullptr) {
  if (a.dims != b.dims) throw DataError("width_ratio: contracts differ in dims");
  double sum = 0.0;
  std::size_t used = 0;
  for (Eigen::Index j = 0; j < a.dims; ++j) {
    const double wb = static_cast<double>(b.upper[j] - b.lower[j]);
    if (!(wb > 0.0)) {
      if (warnings) warnings->push_back("width_ratio: joint " + std::to_string(j) + " excluded (zero width)");
      continue;
    }
    sum += static_cast<double>(a.upper[j] - a.lower[j]) / wb;
    ++used;
  }
  if (used == 0) throw DataError("width_ratio: every joint of the reference contract has zero width");
  return sum / static_cast<double>(used);
}

/// Calibrates a conformal contract from demonstrations and wraps it in a
/// fresh guard. The contract keeps the score model for p-value computation.
template <typename Scalar>
SafetyGuard<Scalar> guard_from_demos(std::span<const BasicEpisode<Scalar>> demos, double alpha,
                                     CalibrationConfig config = {}) {
  if (demos.empty()) throw DataError("insufficient data: empty demonstration set");
  config.alpha = alpha;
  return SafetyGuard<Scalar>(split_calibrate(demos, config).contract);
}

}  // namespace actguard
