#pragma once

#include "actguard/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace actguard {

enum class Provenance { manual, conformal, sigma_heuristic };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::manual: return "manual";
    case Provenance::conformal: return "conformal";
    case Provenance::sigma_heuristic: return "sigma_heuristic";
  }
  return "manual";
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
  if (s == "manual") return Provenance::manual;
  if (s == "conformal") return Provenance::conformal;
  if (s == "sigma_heuristic") return Provenance::sigma_heuristic;
  return std::nullopt;
}

/// Location/scale model and sorted calibration scores; enough to turn a live
/// action into a conformal p-value.
template <typename Scalar>
struct ScoreModel {
  Vector<Scalar> center;
  Vector<Scalar> scale;
  std::vector<Scalar> sorted_scores;

  friend bool operator==(const ScoreModel& a, const ScoreModel& b) {
    return a.center == b.center && a.scale == b.scale && a.sorted_scores == b.sorted_scores;
  }
};

/// Per-joint bounds and per-joint velocity limits (action units per step).
template <typename Scalar>
struct SafetyContract {
  Eigen::Index dims = 0;
  Vector<Scalar> lower;
  Vector<Scalar> upper;
  Vector<Scalar> v_max;
  Provenance provenance = Provenance::manual;
  /// Scalar calibration parameters (alpha, n_cal, quantile level, ...).
  std::map<std::string, double> calibration;
  std::optional<ScoreModel<Scalar>> score_model;

  static SafetyContract uniform(Eigen::Index dims, Scalar lo, Scalar hi, Scalar vmax) {
    SafetyContract c;
    c.dims = dims;
    c.lower = Vector<Scalar>::Constant(dims, lo);
    c.upper = Vector<Scalar>::Constant(dims, hi);
    c.v_max = Vector<Scalar>::Constant(dims, vmax);
    return c;
  }

  /// Bounds and velocity limits all infinite: enforcement is the identity.
  static SafetyContract unbounded(Eigen::Index dims) {
    constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();
    return uniform(dims, -inf, inf, inf);
  }

  friend bool operator==(const SafetyContract& a, const SafetyContract& b) {
    return a.dims == b.dims && a.lower == b.lower && a.upper == b.upper && a.v_max == b.v_max &&
           a.provenance == b.provenance && a.calibration == b.calibration &&
           a.score_model == b.score_model;
  }
};

using SafetyContractd = SafetyContract<double>;

struct ContractIssue {
  enum class Kind { nonpositive_dims, length_mismatch, nan_value, bounds_inverted, nonpositive_velocity };
  Kind kind;
  Eigen::Index joint = -1;  // -1 when the issue is not tied to a joint
  std::string message;
};

/// Lists every violated invariant; empty means the contract is valid.
template <typename Scalar>
std::vector<ContractIssue> validate_contract(const SafetyContract<Scalar>& c) {
  std::vector<ContractIssue> issues;
  using K = ContractIssue::Kind;
  if (c.dims <= 0) {
    issues.push_back({K::nonpositive_dims, -1, "dims must be positive"});
    return issues;
  }
  const auto check_len = [&](const Vector<Scalar>& v, const char* name) {
    if (v.size() != c.dims) {
      std::ostringstream os;
      os << name << " has length " << v.size() << ", expected dims=" << c.dims;
      issues.push_back({K::length_mismatch, -1, os.str()});
      return false;
    }
    return true;
  };
  const bool lengths_ok = check_len(c.lower, "lower") & check_len(c.upper, "upper") &
                          check_len(c.v_max, "v_max");
  if (!lengths_ok) return issues;

  for (Eigen::Index j = 0; j < c.dims; ++j) {
    const std::string at = " at joint " + std::to_string(j);
    if (std::isnan(c.lower[j]) || std::isnan(c.upper[j]) || std::isnan(c.v_max[j])) {
      issues.push_back({K::nan_value, j, "NaN in contract" + at});
      continue;
    }
    if (c.lower[j] > c.upper[j]) {
      issues.push_back({K::bounds_inverted, j, "bounds inverted (lower > upper)" + at});
    }
    if (!(c.v_max[j] > 0)) {
      issues.push_back({K::nonpositive_velocity, j, "nonpositive velocity limit" + at});
    }
  }
  return issues;
}

inline std::string describe(const std::vector<ContractIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += "; ";
    out += i.message;
  }
  return out;
}

enum class ViolationKind { bound_lower, bound_upper, velocity };

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::bound_lower: return "bound_lower";
    case ViolationKind::bound_upper: return "bound_upper";
    case ViolationKind::velocity: return "velocity";
  }
  return "bound_lower";
}

struct ViolationRecord {
  std::uint64_t timestep = 0;
  Eigen::Index joint = 0;
  ViolationKind kind = ViolationKind::bound_lower;
  double raw = 0.0;
  double enforced = 0.0;
  double magnitude = 0.0;
  std::uint32_t episode = 0;

  friend bool operator==(const ViolationRecord&, const ViolationRecord&) = default;
};

/// Single-stream enforcement state: the contract, the last executed action
/// and an append-only violation log.
///
/// Each call runs the fixed pipeline
///   (1) clip into [lower, upper]
///   (2) clamp |safe - prev| <= v_max per joint, moving toward prev
///   (3) re-clip into [lower, upper]
/// and logs one record per stage that changed a component. Stage (3) only
/// fires when prev was seeded from outside the bounds.
template <typename Scalar>
class SafetyGuard {
 public:
  using VectorType = Vector<Scalar>;

  struct StepResult {
    VectorType safe;
    std::vector<ViolationRecord> violations;
  };

  explicit SafetyGuard(SafetyContract<Scalar> contract) : contract_(std::move(contract)) {
    const auto issues = validate_contract(contract_);
    if (!issues.empty()) throw ConfigError("invalid contract: " + describe(issues));
    prev_.resize(contract_.dims);
  }

  const SafetyContract<Scalar>& contract() const { return contract_; }
  Eigen::Index dims() const { return contract_.dims; }
  bool has_previous() const { return has_prev_; }
  const VectorType& previous_action() const { return prev_; }
  std::uint64_t step_count() const { return step_count_; }
  std::uint32_t episode() const { return episode_; }
  std::span<const ViolationRecord> violation_log() const { return log_; }
  /// Log offsets at which each episode after the first begins.
  std::span<const std::size_t> episode_starts() const { return episode_starts_; }

  void reserve_log(std::size_t n) { log_.reserve(n); }

  /// Seeds the previous action, e.g. from the robot's measured state. The
  /// value may lie outside the contract bounds.
  void seed_previous(const Eigen::Ref<const VectorType>& action) {
    check_dims(action.size());
    check_finite(action);
    prev_ = action;
    has_prev_ = true;
  }

  /// Allocation-free form: writes the enforced action into `safe` (which may
  /// alias `raw`) and returns the records appended by this call.
  std::span<const ViolationRecord> enforce_into(const Eigen::Ref<const VectorType>& raw,
                                                Eigen::Ref<VectorType> safe) {
    check_dims(raw.size());
    check_dims(safe.size());
    check_finite(raw);

    const std::size_t first = log_.size();
    const Eigen::Index d = contract_.dims;
    const auto& lo = contract_.lower;
    const auto& hi = contract_.upper;

    for (Eigen::Index j = 0; j < d; ++j) safe[j] = clip(raw[j], j);

    if (has_prev_) {
      const auto& vmax = contract_.v_max;
      // Rounded limits shared by the check and the clamp.
      for (Eigen::Index j = 0; j < d; ++j) {
        const Scalar up = prev_[j] + vmax[j];
        const Scalar down = prev_[j] - vmax[j];
        if (safe[j] > up || safe[j] < down) {
          const Scalar clamped = safe[j] > up ? up : down;
          push(j, ViolationKind::velocity, safe[j], clamped,
               std::max(Scalar(0), std::abs(safe[j] - prev_[j]) - vmax[j]));
          safe[j] = clamped;
        }
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        if (safe[j] < lo[j] || safe[j] > hi[j]) safe[j] = clip(safe[j], j);
      }
    }

    prev_ = safe;
    has_prev_ = true;
    ++step_count_;
    return {log_.data() + first, log_.size() - first};
  }

  StepResult enforce(const Eigen::Ref<const VectorType>& raw) {
    StepResult out;
    out.safe.resize(contract_.dims);
    const auto fresh = enforce_into(raw, out.safe);
    out.violations.assign(fresh.begin(), fresh.end());
    return out;
  }

  /// Episode boundary: forgets the previous action and the step counter but
  /// keeps the log, recording where the next episode starts.
  void reset() {
    if (!has_prev_ && step_count_ == 0) return;
    has_prev_ = false;
    step_count_ = 0;
    ++episode_;
    episode_starts_.push_back(log_.size());
  }

 private:
  Scalar clip(Scalar v, Eigen::Index j) {
    const Scalar lo = contract_.lower[j];
    const Scalar hi = contract_.upper[j];
    if (v < lo) {
      push(j, ViolationKind::bound_lower, v, lo, lo - v);
      return lo;
    }
    if (v > hi) {
      push(j, ViolationKind::bound_upper, v, hi, v - hi);
      return hi;
    }
    return v;
  }

  void push(Eigen::Index j, ViolationKind kind, Scalar raw, Scalar enforced, Scalar magnitude) {
    log_.push_back({step_count_, j, kind, static_cast<double>(raw), static_cast<double>(enforced),
                    static_cast<double>(magnitude), episode_});
  }

  void check_dims(Eigen::Index n) const {
    if (n != contract_.dims) {
      throw DataError("action has " + std::to_string(n) + " components, contract expects " +
                      std::to_string(contract_.dims));
    }
  }

  template <typename Derived>
  void check_finite(const Eigen::DenseBase<Derived>& v) const {
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (!std::isfinite(v[j])) {
        throw DataError("non-finite action component at joint " + std::to_string(j) + ", step " +
                        std::to_string(step_count_) + "; action rejected");
      }
    }
  }

  SafetyContract<Scalar> contract_;
  VectorType prev_;
  bool has_prev_ = false;
  std::uint64_t step_count_ = 0;
  std::uint32_t episode_ = 0;
  std::vector<ViolationRecord> log_;
  std::vector<std::size_t> episode_starts_;
};

using SafetyGuardd = SafetyGuard<double>;

}  // namespace actguard
