#include "actguard/bench.hpp"

#include "actguard/conformal.hpp"
#include "actguard/order_stats.hpp"
#include "actguard/stream.hpp"

#include "json.hpp"

#include <chrono>
#include <numeric>
#include <random>

namespace actguard {

namespace {

const std::atomic<std::uint64_t>* g_counter = nullptr;

std::vector<Episode> gaussian_demos(int dims, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Episode> demos(30);
  for (std::size_t i = 0; i < demos.size(); ++i) {
    demos[i].episode_id = "bench-" + std::to_string(i);
    demos[i].actions.resize(100, dims);
    for (Eigen::Index k = 0; k < demos[i].actions.size(); ++k) demos[i].actions.data()[k] = normal(rng);
  }
  return demos;
}

}  // namespace

void set_allocation_counter(const std::atomic<std::uint64_t>* counter) { g_counter = counter; }

const std::atomic<std::uint64_t>* allocation_counter() { return g_counter; }

BenchResult run_step_bench(const BenchConfig& config) {
  if (config.dims < 1) throw ConfigError("bench: dims must be positive");
  if (config.steps < 1) throw ConfigError("bench: steps must be positive");

  std::mt19937_64 rng(config.seed);
  const auto demos = gaussian_demos(config.dims, rng);
  CalibrationConfig cal;
  cal.alpha = config.alpha;
  cal.seed = config.seed;
  const SafetyContractd contract = split_calibrate<double>(demos, cal).contract;

  const std::size_t total = config.warmup + config.steps;
  ActionMatrixXd stream(static_cast<Eigen::Index>(total), config.dims);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index k = 0; k < stream.size(); ++k) stream.data()[k] = normal(rng);

  // The violation log is the guard's full audit trail; size it from a dry run
  // over the same stream.
  SafetyGuardd dry(contract);
  for (Eigen::Index t = 0; t < stream.rows(); ++t) dry.enforce(stream.row(t).transpose());
  const std::size_t log_records = dry.violation_log().size();

  StreamMonitor<double> monitor(contract, MonitorConfig{}, config.alpha, config.cusum_h);
  monitor.reserve(total, log_records);
  VectorXd raw(config.dims), safe(config.dims);
  std::vector<double> micros(config.steps);

  using clock = std::chrono::steady_clock;
  std::uint64_t alloc_before = 0;
  for (std::size_t i = 0; i < total; ++i) {
    raw = stream.row(static_cast<Eigen::Index>(i)).transpose();
    if (i == config.warmup && g_counter) alloc_before = g_counter->load(std::memory_order_relaxed);
    const auto t0 = clock::now();
    monitor.step(raw, safe);
    const auto t1 = clock::now();
    if (i >= config.warmup) {
      micros[i - config.warmup] = std::chrono::duration<double, std::micro>(t1 - t0).count();
    }
  }

  BenchResult r;
  if (g_counter) r.allocations = g_counter->load(std::memory_order_relaxed) - alloc_before;
  r.dims = config.dims;
  r.steps = config.steps;
  r.mean_us = std::accumulate(micros.begin(), micros.end(), 0.0) / static_cast<double>(micros.size());
  std::sort(micros.begin(), micros.end());
  r.p50_us = percentile_sorted<double>(micros, 50.0);
  r.p95_us = percentile_sorted<double>(micros, 95.0);
  r.p99_us = percentile_sorted<double>(micros, 99.0);
  return r;
}

std::string bench_to_json(const BenchResult& r) {
  nlohmann::ordered_json j;
  j["dims"] = r.dims;
  j["steps"] = r.steps;
  j["p50_us"] = r.p50_us;
  j["p95_us"] = r.p95_us;
  j["p99_us"] = r.p99_us;
  j["mean_us"] = r.mean_us;
  if (r.allocations) {
    j["allocations_after_warmup"] = *r.allocations;
  } else {
    j["allocations_after_warmup"] = nullptr;
  }
  return j.dump();
}

}  // namespace actguard
