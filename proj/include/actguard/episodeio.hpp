#pragma once

#include "actguard/contracts.hpp"
#include "actguard/core.hpp"
#include "actguard/evalstats.hpp"
#include "actguard/monitors.hpp"
#include "actguard/synthpolicies.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace actguard {

struct Dataset {
  std::vector<Episode> episodes;
  /// Empty when the dataset has no episodes.
  std::optional<Eigen::Index> dims;
  std::map<std::string, std::string> manifest;
};

/// Checks T >= 1, finite values, uniform dims and unique ids; fills in dims.
void validate_dataset(Dataset& dataset);

enum class EpisodeFormat { jsonl, csv };

/// By extension: .jsonl / .csv.
std::optional<EpisodeFormat> episode_format_for(const std::filesystem::path& path);

// Episode files
//
// JSONL: the first line is a header
//   {"format":"actguard-episodes","version":1,"dims":D,"manifest":{...}}
// followed by one episode per line
//   {"episode_id":...,"success":...,"family":...,"source":...,"actions":[[...],...]}
// where success, family and source are omitted when absent.
//
// CSV: a "# actguard-episodes-csv v1" line, a header row
//   episode_id,t,j0,...,j{D-1},success,family,source
// and one row per action; empty cells mean absent.

Dataset read_episodes(std::istream& in, EpisodeFormat format);
Dataset read_episodes(const std::filesystem::path& path, EpisodeFormat format);
Dataset read_episodes(const std::filesystem::path& path);
void write_episodes(const Dataset& dataset, std::ostream& out, EpisodeFormat format);
void write_episodes(const Dataset& dataset, const std::filesystem::path& path, EpisodeFormat format);
void write_episodes(const Dataset& dataset, const std::filesystem::path& path);

// Contracts: {"format_version":1,"dims":D,"lower":[...],"upper":[...],"v_max":[...],
// "provenance":"...","calibration":{...}}. Infinite entries are written as
// the strings "inf" and "-inf". A score model travels inside calibration as
// "center", "scale" and "scores".

SafetyContractd parse_contract(std::string_view json_text);
std::string contract_to_json(const SafetyContractd& contract);
SafetyContractd read_contract(const std::filesystem::path& path);
void write_contract(const SafetyContractd& contract, const std::filesystem::path& path);

// Violation log: JSONL with a {"format":"actguard-violations","version":1}
// header, then {"t","joint","kind","raw","enforced","magnitude","episode"}.

std::string violation_log_header();
std::string violation_to_json(const ViolationRecord& record);
void write_violations(std::span<const ViolationRecord> records, std::ostream& out);
std::vector<ViolationRecord> read_violations(std::istream& in);

// Metrics table: "# actguard-metrics-csv v1", then the columns of
// kMetricsColumns in that order. A reader accepts any subset of the metric
// columns; a missing metric column marks the metric unavailable.

inline constexpr std::array<std::string_view, 14> kMetricsColumns = {
    "episode_id",         "family",          "success",     "episode_len",
    "reversal_rate",      "jerk_rms",        "jerk_violations",
    "momentum_coherence", "momentum_degenerate", "spectral_energy_ratio",
    "total_variation",    "stall_steps",     "stall_rate",  "velocity_violations"};

MetricsTable read_metrics(std::istream& in);
MetricsTable read_metrics(const std::filesystem::path& path);
void write_metrics(const MetricsTable& table, std::ostream& out);
void write_metrics(const MetricsTable& table, const std::filesystem::path& path);

// Evaluation report: JSON with format "actguard-report", plus a fixed-width
// text rendering.

std::string report_to_json(const EvaluationReport& report);
EvaluationReport parse_report(std::string_view json_text);
std::string report_to_text(const EvaluationReport& report);

// Monitor configuration: every key optional, defaults from MonitorConfig.

MonitorConfig parse_monitor_config(std::string_view json_text);
std::string monitor_config_to_json(const MonitorConfig& config);
MonitorConfig read_monitor_config(const std::filesystem::path& path);

// Synthetic benchmark settings.

struct SynthSettings {
  BenchmarkSpec benchmark;
  int n_demos = 30;
  std::uint64_t demo_seed = 0;
};

/// The built-in settings: all three families with default_family_config,
/// 200 episodes each, failure rate 0.4, mixture 0.6/0.2/0.2.
SynthSettings default_synth_settings();
SynthSettings parse_synth_settings(std::string_view json_text);
std::string synth_settings_to_json(const SynthSettings& settings);
SynthSettings read_synth_settings(const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace actguard
