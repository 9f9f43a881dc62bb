#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedcycle/orchestrator.hpp"

namespace fedcycle {

struct GridSpec {
  std::vector<double> amplitudes;
  std::vector<double> frequencies;

  bool operator==(const GridSpec&) const = default;
};

/// One experiment: a run template, a repeat count, and optionally an
/// (amplitude, frequency) grid swept with a cyclic schedule.
struct ExperimentConfig {
  RunConfig run;
  int repeats = 6;
  std::optional<GridSpec> grid;
  std::optional<double> target_accuracy;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline constexpr const char* kRoundCsvHeader =
    "round,gamma,test_accuracy,mean_train_loss,wall_ms,selected_clients";

/// Parses and validates the JSON config document. Unknown keys, type
/// mismatches and constraint violations raise ConfigError naming the field;
/// syntax errors report the line.
ExperimentConfig parse_config(const std::string& text);

/// Canonical JSON echo of a config; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& cfg);

/// One row per evaluated round; reals carry 17 significant digits, client
/// ids are ';'-joined, lines end with '\n'.
void emit_round_csv(const RunRecord& run, const std::string& path);

struct CellReport {
  std::string name;
  std::optional<double> amplitude;  // grid cells only
  std::optional<double> frequency;
  bool ok = false;
  std::string error;
  int error_code = 0;  // CLI exit code class of the failure
  double mean_max_accuracy = 0.0;
  std::optional<double> std_max_accuracy;
  std::optional<double> median_rounds_to_target;
};

struct ExperimentReport {
  std::vector<CellReport> cells;
  std::optional<std::string> best_cell;
  int exit_code = 0;
};

/// Executes repeats x (grid cells or 1) runs, writing
/// <out>/<cell>/<repeat>/rounds.csv, <out>/<cell>/summary.json,
/// <out>/report.json and <out>/config.echo. Failed cells are recorded in
/// the report while the other cells continue.
ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs = 1);

}  // namespace fedcycle
