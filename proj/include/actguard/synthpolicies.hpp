#pragma once

#include "actguard/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace actguard {

enum class Family { discrete, smooth, chunked };

inline constexpr std::array<Family, 3> kAllFamilies = {Family::discrete, Family::smooth, Family::chunked};

std::string_view to_string(Family f);
std::optional<Family> parse_family(std::string_view s);

/// Generator knobs for one architecture family. Every episode starts with a
/// short hold, then follows jittered proportional control toward a target;
/// the family transform is applied last.
struct FamilyConfig {
  Family family = Family::smooth;
  int dims = 2;
  int episode_len = 120;
  /// Start and target points are drawn uniformly from [lo, hi] per joint.
  double workspace_lo = 64.0;
  double workspace_hi = 448.0;
  double gain = 0.06;
  /// Std of the multiplicative gain jitter (clipped to +-0.9 so control
  /// never overshoots).
  double noise_scale = 0.5;
  /// Hold length is drawn from [1, start_hold_max).
  int start_hold_max = 8;

  // discrete
  double codebook_step = 4.0;
  double grid_jump_prob = 0.001;
  // smooth and chunked (weight on the newest sample)
  double smoothing_constant = 0.3;
  // chunked
  int chunk_len = 10;
  double boundary_jump_scale = 2.0;

  // family-typical failure signatures
  double oscillation_amplitude = 1.0;
  int oscillation_period = 8;
  /// Std of the jitter on a stalled action, far below a demo-calibrated
  /// stall tau.
  double stall_noise = 5e-5;
  double wrong_target_min_distance = 64.0;
  /// Failure onset fraction range used by generate_benchmark.
  double onset_min = 0.15;
  double onset_max = 0.5;

  void validate() const;
  friend bool operator==(const FamilyConfig&, const FamilyConfig&) = default;
};

/// Built-in defaults; config/synth_defaults.json mirrors these.
FamilyConfig default_family_config(Family f);

enum class FailureMode { none, oscillation, stall, wrong_target };

std::string_view to_string(FailureMode m);
std::optional<FailureMode> parse_failure_mode(std::string_view s);

/// Weights over (oscillation, stall, wrong_target).
using FailureMixture = std::array<double, 3>;
inline constexpr FailureMixture kDefaultMixture = {0.6, 0.2, 0.2};

struct FailureSpec {
  FailureMode mode = FailureMode::none;
  double onset_fraction = 0.5;
  double intensity = 1.0;
  FailureMixture mixture_weights = kDefaultMixture;

  void validate() const;
};

struct GeneratedEpisode {
  Episode episode;
  VectorXd start;
  VectorXd original_target;
  /// Target in force at the end (differs from original_target for wrong_target).
  VectorXd final_target;
  /// First step affected by the failure; episode_len when mode is none.
  Eigen::Index onset = 0;
};

/// Deterministic in (config, failure, seed). success = (mode == none); the
/// episode's source records the injected mode as "synthetic/<mode>".
GeneratedEpisode generate_episode_traced(const FamilyConfig& config, const FailureSpec& failure, std::uint64_t seed);
Episode generate_episode(const FamilyConfig& config, const FailureSpec& failure, std::uint64_t seed);

struct BenchmarkSpec {
  std::vector<FamilyConfig> families;
  int n_per_family = 200;
  double failure_rate = 0.4;
  FailureMixture mixture = kDefaultMixture;
  double intensity = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-episode seed for (seed, family, index); `stream` separates benchmark
/// episodes from demonstrations.
std::uint64_t derive_seed(std::uint64_t seed, Family family, std::uint64_t index, std::uint32_t stream = 0);

/// For each family, n episodes of which round(failure_rate * n) fail. Failure
/// modes are apportioned to the mixture by largest remainder and assigned to
/// shuffled indices; onsets are uniform in [onset_min, onset_max].
std::vector<Episode> generate_benchmark(const BenchmarkSpec& spec);

/// Success-only episodes for calibration, from a seed stream disjoint from
/// generate_benchmark's.
std::vector<Episode> generate_demos(const FamilyConfig& config, int n, std::uint64_t seed);

/// Failure-mode count per family: round(rate * n) apportioned over the
/// mixture.
std::array<int, 3> apportion_failures(int n_failures, const FailureMixture& mixture);

}  // namespace actguard
