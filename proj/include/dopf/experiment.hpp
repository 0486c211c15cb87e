#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dopf/algorithms.hpp"
#include "dopf/comms.hpp"
#include "dopf/network.hpp"
#include "dopf/partition.hpp"

namespace dopf {

// |dist - central| / |central|; the success criterion is this < 1%.
double relative_gap(double dist_cost, double central_cost);

// Table-style parameter presets for the bundled systems, named
// "<system>/<algorithm>" (e.g. "case118/admm").  "wb5/admm-text" carries
// the alternative WB5 ADMM weight of 1e2.  APP presets expand the single
// published value a into (alpha, gamma, beta) = (a, a, 2a).
AlgorithmParams preset_params(std::string_view name);
std::vector<std::string> preset_names();

struct ExperimentConfig {
  std::string case_file;
  std::string partition_file;
  std::string preset;      // informational once params are resolved
  AlgorithmParams params;  // fully resolved algorithm parameters
  std::vector<ChannelModel> grid;  // one entry per sweep point
  int runs = 100;
  std::uint64_t base_seed = 1;
  int threads = 1;
  std::string json_path;  // empty = no file output
  std::string csv_path;

  void check() const;  // throws std::invalid_argument
};

// JSON config; see README for the schema.  Unknown keys are rejected so
// typos cannot silently disable a setting.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct RunSummary {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::iteration_limit;
  int iterations = 0;
  double final_true_mismatch = 0.0;
  double final_perceived_mismatch = 0.0;
  double objective = 0.0;
  double relative_gap = 0.0;
  bool beta_overflow = false;
  bool success = false;  // no subproblem failure and relative gap < 1%
};

struct PointReport {
  ChannelModel channel;
  std::vector<RunSummary> runs;
  double success_rate = 0.0;    // percent
  double avg_iterations = 0.0;  // over successful runs; the cap when none
  double mean_mismatch = 0.0;   // final true mismatch across runs
  double std_mismatch = 0.0;
  double mean_gap = 0.0;
  double max_gap = 0.0;
  int failures = 0;  // subproblem_failure count
};

struct ExperimentReport {
  std::string case_name;
  std::string partition_file;
  std::string algorithm;
  AlgorithmParams params;
  int runs = 0;
  std::uint64_t base_seed = 0;
  double central_objective = 0.0;
  std::vector<PointReport> points;
};

RunSummary summarize_run(const RunRecord& record);

// Percentage of records meeting the success criterion; throws on an empty
// list.
double success_rate(const std::vector<RunRecord>& records);

// Execute the full sweep: every (grid point, run index) pair gets the seed
// derive_seed(base_seed, channel content hash, run index), so reports are
// a pure function of the config — independent of thread count and of any
// other points in the grid.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Serialization.  JSON carries the full report with 17-significant-digit
// numbers; reading it back and re-emitting reproduces the bytes exactly.
// CSV has one row per (grid point, statistic).
std::string report_to_json(const ExperimentReport& report);
std::string report_to_csv(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& text);
void write_file(const std::string& path, const std::string& content);

}  // namespace dopf
