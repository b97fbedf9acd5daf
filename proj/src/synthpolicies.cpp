#include "actguard/synthpolicies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace actguard {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::discrete: return "discrete";
    case Family::smooth: return "smooth";
    case Family::chunked: return "chunked";
  }
  return "smooth";
}

std::optional<Family> parse_family(std::string_view s) {
  for (Family f : kAllFamilies) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

std::string_view to_string(FailureMode m) {
  switch (m) {
    case FailureMode::none: return "none";
    case FailureMode::oscillation: return "oscillation";
    case FailureMode::stall: return "stall";
    case FailureMode::wrong_target: return "wrong_target";
  }
  return "none";
}

std::optional<FailureMode> parse_failure_mode(std::string_view s) {
  for (auto m : {FailureMode::none, FailureMode::oscillation, FailureMode::stall, FailureMode::wrong_target}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

void FamilyConfig::validate() const {
  if (dims < 1) throw ConfigError("family config: dims must be positive");
  if (episode_len < 8) throw ConfigError("family config: episode_len must be at least 8");
  if (!(workspace_lo < workspace_hi)) throw ConfigError("family config: empty workspace");
  if (!(gain > 0.0 && gain < 0.5)) throw ConfigError("family config: gain must lie in (0, 0.5)");
  if (!(noise_scale > 0.0)) throw ConfigError("family config: noise_scale must be positive");
  if (start_hold_max < 2) throw ConfigError("family config: start_hold_max must be at least 2");
  if (!(codebook_step > 0.0)) throw ConfigError("family config: codebook_step must be positive");
  if (!(grid_jump_prob >= 0.0 && grid_jump_prob < 1.0)) throw ConfigError("family config: grid_jump_prob out of range");
  if (!(smoothing_constant > 0.0 && smoothing_constant < 1.0)) {
    throw ConfigError("family config: smoothing_constant must lie in (0, 1)");
  }
  if (family == Family::chunked && chunk_len < 2) throw ConfigError("family config: chunk_len must be at least 2");
  if (!(boundary_jump_scale > 0.0)) throw ConfigError("family config: boundary_jump_scale must be positive");
  if (!(oscillation_amplitude > 0.0)) throw ConfigError("family config: oscillation_amplitude must be positive");
  if (oscillation_period < 2) throw ConfigError("family config: oscillation_period must be at least 2");
  if (!(stall_noise >= 0.0)) throw ConfigError("family config: stall_noise must be non-negative");
  if (!(wrong_target_min_distance >= 0.0 &&
        wrong_target_min_distance < (workspace_hi - workspace_lo) * std::sqrt(static_cast<double>(dims)) / 2.0)) {
    throw ConfigError("family config: wrong_target_min_distance too large for the workspace");
  }
  if (!(onset_min >= 0.0 && onset_min <= onset_max && onset_max < 1.0)) {
    throw ConfigError("family config: onset range must satisfy 0 <= onset_min <= onset_max < 1");
  }
}

FamilyConfig default_family_config(Family f) {
  FamilyConfig c;
  c.family = f;
  switch (f) {
    case Family::discrete:
      // Token-rate flicker between codebook entries.
      c.oscillation_amplitude = 10.0;
      c.oscillation_period = 4;
      break;
    case Family::smooth:
      c.smoothing_constant = 0.3;
      c.oscillation_amplitude = 0.7;
      c.oscillation_period = 16;
      break;
    case Family::chunked:
      c.smoothing_constant = 0.5;
      c.oscillation_amplitude = 6.0;
      c.oscillation_period = 8;
      break;
  }
  return c;
}

void FailureSpec::validate() const {
  if (!(onset_fraction >= 0.0 && onset_fraction < 1.0)) throw ConfigError("failure: onset_fraction must lie in [0, 1)");
  if (!(intensity > 0.0)) throw ConfigError("failure: intensity must be positive");
  double sum = 0.0;
  for (double w : mixture_weights) {
    if (!(w >= 0.0)) throw ConfigError("failure: mixture weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("failure: mixture weights must sum to 1");
}

namespace {

VectorXd uniform_point(std::mt19937_64& rng, const FamilyConfig& c) {
  std::uniform_real_distribution<double> u(c.workspace_lo, c.workspace_hi);
  VectorXd p(c.dims);
  for (auto& v : p) v = u(rng);
  return p;
}

void apply_family(ActionMatrixXd& a, const FamilyConfig& c, std::mt19937_64& rng) {
  const Eigen::Index T = a.rows(), D = a.cols();
  switch (c.family) {
    case Family::discrete: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double step = c.codebook_step;
      for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index j = 0; j < D; ++j) {
          double k = std::round(a(t, j) / step);
          if (u(rng) < c.grid_jump_prob) k += u(rng) < 0.5 ? -1.0 : 1.0;
          a(t, j) = k * step;
        }
      }
      break;
    }
    case Family::smooth: {
      const double beta = c.smoothing_constant;
      for (Eigen::Index t = 1; t < T; ++t) a.row(t) = (1.0 - beta) * a.row(t - 1) + beta * a.row(t);
      break;
    }
    case Family::chunked: {
      // Each chunk is planned open-loop with its own offset and restarts the
      // filter, so seams carry a discontinuity.
      const double beta = c.smoothing_constant;
      std::normal_distribution<double> jump(0.0, c.boundary_jump_scale);
      Eigen::RowVectorXd offset(D);
      for (Eigen::Index t = 0; t < T; ++t) {
        if (t % c.chunk_len == 0) {
          for (auto& v : offset) v = jump(rng);
          a.row(t) += offset;
        } else {
          a.row(t) = (1.0 - beta) * a.row(t - 1) + beta * (a.row(t) + offset);
        }
      }
      break;
    }
  }
}

}  // namespace

GeneratedEpisode generate_episode_traced(const FamilyConfig& c, const FailureSpec& failure, std::uint64_t seed) {
  c.validate();
  failure.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  const Eigen::Index T = c.episode_len, D = c.dims;
  GeneratedEpisode out;
  VectorXd x = uniform_point(rng, c);
  VectorXd goal = uniform_point(rng, c);
  out.start = x;
  out.original_target = goal;
  const auto hold = static_cast<Eigen::Index>(std::uniform_int_distribution<int>(1, c.start_hold_max - 1)(rng));
  VectorXd phase(D);
  for (auto& v : phase) v = phase_dist(rng);

  const FailureMode mode = failure.mode;
  const Eigen::Index onset =
      mode == FailureMode::none ? T : static_cast<Eigen::Index>(std::floor(failure.onset_fraction * T));
  out.onset = onset;

  ActionMatrixXd a(T, D);
  VectorXd fix;
  bool failing = false;
  for (Eigen::Index t = 0; t < T; ++t) {
    a.row(t) = x.transpose();
    if (t == onset) {
      failing = true;
      fix = x;
      if (mode == FailureMode::wrong_target) {
        VectorXd wrong = uniform_point(rng, c);
        for (int attempt = 0; attempt < 1000 && (wrong - goal).norm() < c.wrong_target_min_distance; ++attempt) {
          wrong = uniform_point(rng, c);
        }
        goal = wrong;
      }
    }
    if (t < hold) continue;
    if (failing && mode == FailureMode::oscillation) {
      const double amp = c.oscillation_amplitude * failure.intensity;
      const double w = 2.0 * std::numbers::pi / c.oscillation_period;
      for (Eigen::Index j = 0; j < D; ++j) x[j] = fix[j] + amp * std::sin(w * static_cast<double>(t + 1 - onset) + phase[j]);
    } else if (failing && mode == FailureMode::stall) {
      x = fix;
    } else {
      for (Eigen::Index j = 0; j < D; ++j) {
        const double eps = std::clamp(c.noise_scale * normal(rng), -0.9, 0.9);
        x[j] += c.gain * (1.0 + eps) * (goal[j] - x[j]);
      }
    }
  }
  apply_family(a, c, rng);
  if (mode == FailureMode::stall) {
    // The executed action freezes; jitter is added after the family transform.
    // A stalled chunked policy still replans, so each new chunk lands at its
    // own offset from the frozen point.
    const Eigen::RowVectorXd frozen = a.row(onset);
    std::normal_distribution<double> jump(0.0, c.boundary_jump_scale);
    Eigen::RowVectorXd offset = Eigen::RowVectorXd::Zero(D);
    for (Eigen::Index t = onset + 1; t < T; ++t) {
      if (c.family == Family::chunked && t % c.chunk_len == 0) {
        for (auto& v : offset) v = jump(rng);
      }
      for (Eigen::Index j = 0; j < D; ++j) {
        double v = frozen[j] + offset[j] + c.stall_noise * failure.intensity * normal(rng);
        if (c.family == Family::discrete) v = std::round(v / c.codebook_step) * c.codebook_step;
        a(t, j) = v;
      }
    }
  }
  out.final_target = goal;

  out.episode.actions = std::move(a);
  out.episode.success = mode == FailureMode::none;
  out.episode.family = std::string(to_string(c.family));
  out.episode.source = "synthetic/" + std::string(to_string(mode));
  return out;
}

Episode generate_episode(const FamilyConfig& config, const FailureSpec& failure, std::uint64_t seed) {
  return generate_episode_traced(config, failure, seed).episode;
}

void BenchmarkSpec::validate() const {
  if (families.empty()) throw ConfigError("benchmark: no families");
  if (n_per_family < 20) throw ConfigError("benchmark: n_per_family must be at least 20");
  if (!(failure_rate > 0.0 && failure_rate < 1.0)) throw ConfigError("benchmark: failure_rate must lie in (0, 1)");
  FailureSpec probe;
  probe.mixture_weights = mixture;
  probe.intensity = intensity;
  probe.validate();
  for (const auto& f : families) f.validate();
}

std::uint64_t derive_seed(std::uint64_t seed, Family family, std::uint64_t index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(family), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32), stream};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::array<int, 3> apportion_failures(int n_failures, const FailureMixture& mixture) {
  std::array<int, 3> counts{};
  std::array<double, 3> remainder{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = mixture[i] * n_failures;
    counts[i] = static_cast<int>(std::floor(exact));
    remainder[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return remainder[x] > remainder[y]; });
  for (std::size_t k = 0; assigned < n_failures; k = (k + 1) % 3, ++assigned) ++counts[order[k]];
  return counts;
}

std::vector<Episode> generate_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  std::vector<Episode> out;
  const int n = spec.n_per_family;
  const int n_fail = static_cast<int>(std::lround(spec.failure_rate * n));
  const auto counts = apportion_failures(n_fail, spec.mixture);

  for (const auto& fc : spec.families) {
    std::vector<FailureMode> modes(static_cast<std::size_t>(n), FailureMode::none);
    std::size_t k = 0;
    const std::array<FailureMode, 3> kinds{FailureMode::oscillation, FailureMode::stall, FailureMode::wrong_target};
    for (std::size_t m = 0; m < 3; ++m) {
      for (int i = 0; i < counts[m]; ++i) modes[k++] = kinds[m];
    }
    std::mt19937_64 assign(derive_seed(spec.seed, fc.family, 0, 2));
    std::shuffle(modes.begin(), modes.end(), assign);

    for (int i = 0; i < n; ++i) {
      const std::uint64_t ep_seed = derive_seed(spec.seed, fc.family, static_cast<std::uint64_t>(i), 0);
      FailureSpec failure;
      failure.mode = modes[static_cast<std::size_t>(i)];
      failure.intensity = spec.intensity;
      failure.mixture_weights = spec.mixture;
      if (failure.mode != FailureMode::none) {
        std::mt19937_64 onset_rng(ep_seed ^ 0x9e3779b97f4a7c15ULL);
        failure.onset_fraction = std::uniform_real_distribution<double>(fc.onset_min, fc.onset_max)(onset_rng);
      }
      Episode ep = generate_episode(fc, failure, ep_seed);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04d", std::string(to_string(fc.family)).c_str(), i);
      ep.episode_id = id;
      out.push_back(std::move(ep));
    }
  }
  return out;
}

std::vector<Episode> generate_demos(const FamilyConfig& config, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_demos: n must be positive");
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Episode ep = generate_episode(config, FailureSpec{}, derive_seed(seed, config.family, static_cast<std::uint64_t>(i), 1));
    char id[64];
    std::snprintf(id, sizeof id, "%s-demo-%04d", std::string(to_string(config.family)).c_str(), i);
    ep.episode_id = id;
    out.push_back(std::move(ep));
  }
  return out;
}

}  // namespace actguard
