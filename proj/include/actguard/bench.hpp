#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace actguard {

struct BenchConfig {
  int dims = 14;
  std::size_t steps = 100000;
  std::size_t warmup = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  double cusum_h = 5.0;
};

struct BenchResult {
  int dims = 0;
  std::size_t steps = 0;
  double p50_us = 0.0;
  double p95_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  /// Heap allocations observed during the timed steps; empty when the host
  /// binary does not count allocations.
  std::optional<std::uint64_t> allocations;
};

/// Binaries that replace the global operator new register their counter
/// here so the bench can report heap activity.
void set_allocation_counter(const std::atomic<std::uint64_t>* counter);
const std::atomic<std::uint64_t>* allocation_counter();

/// Times StreamMonitor::step (enforce, score, p-value, CUSUM, health) on a
/// conformal contract calibrated from Gaussian demonstrations. Buffers are
/// sized before timing starts; steps after warmup are timed individually.
BenchResult run_step_bench(const BenchConfig& config);

std::string bench_to_json(const BenchResult& result);

}  // namespace actguard
