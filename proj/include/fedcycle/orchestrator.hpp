#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedcycle/client.hpp"
#include "fedcycle/data.hpp"
#include "fedcycle/model.hpp"
#include "fedcycle/server.hpp"

namespace fedcycle {

enum class DataKind { Blobs, Idx };

/// Data source descriptor: synthetic blobs or an IDX pair, plus the
/// label-skew partition and held-out test split applied to it.
struct DataConfig {
  DataKind kind = DataKind::Blobs;
  // blobs
  int num_classes = 10;
  int input_dim = 20;
  int samples_per_class = 500;
  double spread = 0.3;
  // idx
  std::string images_path;
  std::string labels_path;
  // common
  SkewConfig skew;
  double test_fraction = 0.2;

  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelSpec model;
  ClientConfig client;
  ServerConfig server;
  DataConfig data;
  int num_clients = 0;  // N
  int horizon = 0;      // G
  int eval_every = 1;
  std::uint64_t master_seed = 0;

  bool operator==(const RunConfig&) const = default;
};

void validate(const RunConfig& cfg);

/// Metrics for one evaluated round. `wall_ms` is a deterministic work proxy
/// (local SGD steps taken that round), not measured time, so that emitted
/// records are byte-reproducible.
struct RoundRecord {
  int round = 0;
  double gamma = 0.0;
  std::vector<int> selected;
  double test_accuracy = 0.0;
  double mean_train_loss = 0.0;
  long long wall_ms = 0;

  bool operator==(const RoundRecord&) const = default;
};

struct RunRecord {
  std::string config_digest;
  std::vector<RoundRecord> records;
  ParamVector final_params;
};

/// Hex digest of a RunConfig, stable across runs of the same build.
std::string config_digest(const RunConfig& cfg);

/// Runs broadcast / local update / cyclic aggregation for `horizon` rounds.
/// Every seed used anywhere derives deterministically from master_seed, so
/// the whole record is a pure function of the config.
RunRecord run_federated(const RunConfig& cfg);

/// Fraction of test points whose argmax prediction matches the label.
double evaluate(const ModelSpec& spec, const ParamVector& params,
                const LabeledDataset& test);

/// Smallest recorded round whose test accuracy reaches `target`.
std::optional<int> rounds_to_target(const RunRecord& run, double target);

double max_accuracy(const RunRecord& run);

struct RepeatSummary {
  double mean_max_accuracy = 0.0;
  double std_max_accuracy = 0.0;  // unbiased, n-1 denominator
  std::optional<double> median_rounds_to_target;
  std::optional<double> speedup;  // median(baseline) / median(treatment)
};

/// Mean and unbiased std of max accuracy over repeats; when `target` is set,
/// the median rounds-to-target; when `baseline` is also given (same length),
/// the paired speedup. Requires >= 2 runs.
RepeatSummary summarize_repeats(const std::vector<RunRecord>& runs,
                                std::optional<double> target,
                                const std::vector<RunRecord>* baseline = nullptr);

}  // namespace fedcycle
