#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fedcycle {

/// Column-per-sample feature matrix with class labels in [0, num_classes).
struct LabeledDataset {
  Eigen::MatrixXd features;  // input_dim x n
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.rows()); }
};

/// One edge device's private shard.
struct ClientDataset {
  int client_id = 0;
  LabeledDataset data;
  std::vector<int> present_classes;  // sorted, exactly the labels occurring in data
};

struct SkewConfig {
  int num_clients = 0;
  int classes_per_client = 4;
  int max_per_class = 100;
  std::uint64_t seed = 0;
  // When set, per-class pools never recycle samples across clients; the
  // partition fails once a pool is exhausted instead.
  bool strict_disjoint = false;

  bool operator==(const SkewConfig&) const = default;
};

/// Gaussian blobs: class centers drawn uniformly from [-1,1]^dim with
/// pairwise separation >= 4*spread (rejection-resampled), samples
/// N(center, spread^2 I). Deterministic in the seed.
LabeledDataset generate_blobs(int num_classes, int input_dim, int samples_per_class,
                              double spread, std::uint64_t seed);

/// Big-endian IDX image/label pair (the MNIST distribution format).
/// Pixels are scaled by 1/255 into [0,1] flat feature vectors.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Label-skew partition: every client gets classes_per_client distinct
/// classes and up to max_per_class samples of each, drawn without
/// replacement from per-class shuffled pools that cycle independently.
std::vector<ClientDataset> partition_label_skew(const LabeledDataset& source,
                                                const SkewConfig& cfg);

/// Stratified, seeded, disjoint split.
std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& source,
                                                           double test_fraction,
                                                           std::uint64_t seed);

}  // namespace fedcycle
