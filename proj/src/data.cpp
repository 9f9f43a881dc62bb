#include "fedcycle/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"

namespace fedcycle {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::vector<std::vector<int>> indices_by_class(const LabeledDataset& source) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(source.num_classes));
  for (int i = 0; i < source.size(); ++i) {
    by_class[static_cast<std::size_t>(source.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  return by_class;
}

LabeledDataset gather(const LabeledDataset& source, const std::vector<int>& idx) {
  LabeledDataset out;
  out.num_classes = source.num_classes;
  out.features.resize(source.features.rows(), static_cast<Eigen::Index>(idx.size()));
  out.labels.resize(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    out.features.col(static_cast<Eigen::Index>(j)) = source.features.col(idx[j]);
    out.labels[j] = source.labels[static_cast<std::size_t>(idx[j])];
  }
  return out;
}

std::uint32_t read_be_u32(std::ifstream& in, const std::string& field) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw DataError(DataError::Kind::Truncated, field,
                    "truncated IDX file while reading " + field);
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace

LabeledDataset generate_blobs(int num_classes, int input_dim, int samples_per_class,
                              double spread, std::uint64_t seed) {
  if (num_classes < 1 || input_dim < 1 || samples_per_class < 1) {
    throw ConfigError("generate_blobs: counts must be positive");
  }
  if (!(spread > 0.0)) {
    throw ConfigError("generate_blobs: spread must be > 0");
  }

  const double min_sep = 4.0 * spread;
  Eigen::MatrixXd centers(input_dim, num_classes);
  Rng center_rng(seed_combine(seed, seed_tag::kCenters));
  int attempts = 0;
  for (int c = 0; c < num_classes;) {
    if (++attempts > 10000) {
      throw ConfigError("generate_blobs: could not place class centers at separation " +
                        std::to_string(min_sep) + "; spread too large");
    }
    Eigen::VectorXd candidate(input_dim);
    for (int i = 0; i < input_dim; ++i) candidate(i) = 2.0 * center_rng.next_double() - 1.0;
    bool ok = true;
    for (int prev = 0; prev < c; ++prev) {
      if ((centers.col(prev) - candidate).norm() < min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) centers.col(c++) = candidate;
  }

  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(input_dim, static_cast<Eigen::Index>(num_classes) * samples_per_class);
  out.labels.resize(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(samples_per_class));
  Rng sample_rng(seed_combine(seed, seed_tag::kSamples));
  Eigen::Index col = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int s = 0; s < samples_per_class; ++s, ++col) {
      for (int i = 0; i < input_dim; ++i) {
        out.features(i, col) = centers(i, c) + spread * sample_rng.next_normal();
      }
      out.labels[static_cast<std::size_t>(col)] = c;
    }
  }
  return out;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw IoError("cannot open IDX images file: " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw IoError("cannot open IDX labels file: " + labels_path);

  const std::uint32_t images_magic = read_be_u32(images, "images.magic");
  if (images_magic != kImagesMagic) {
    throw DataError(DataError::Kind::BadMagic, "images.magic",
                    "bad IDX images magic: expected 0x00000803");
  }
  const std::uint32_t image_count = read_be_u32(images, "images.count");
  const std::uint32_t rows = read_be_u32(images, "images.rows");
  const std::uint32_t cols = read_be_u32(images, "images.cols");

  const std::uint32_t labels_magic = read_be_u32(labels, "labels.magic");
  if (labels_magic != kLabelsMagic) {
    throw DataError(DataError::Kind::BadMagic, "labels.magic",
                    "bad IDX labels magic: expected 0x00000801");
  }
  const std::uint32_t label_count = read_be_u32(labels, "labels.count");
  if (image_count != label_count) {
    throw DataError(DataError::Kind::CountMismatch, "count",
                    "IDX count mismatch: " + std::to_string(image_count) + " images vs " +
                        std::to_string(label_count) + " labels");
  }

  const std::size_t pixels = std::size_t(rows) * cols;
  std::vector<unsigned char> image_bytes(std::size_t(image_count) * pixels);
  if (!images.read(reinterpret_cast<char*>(image_bytes.data()),
                   static_cast<std::streamsize>(image_bytes.size()))) {
    throw DataError(DataError::Kind::Truncated, "images.data",
                    "truncated IDX images payload");
  }
  std::vector<unsigned char> label_bytes(label_count);
  if (!labels.read(reinterpret_cast<char*>(label_bytes.data()),
                   static_cast<std::streamsize>(label_bytes.size()))) {
    throw DataError(DataError::Kind::Truncated, "labels.data",
                    "truncated IDX labels payload");
  }

  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(pixels), image_count);
  out.labels.resize(label_count);
  int max_label = 0;
  for (std::uint32_t n = 0; n < image_count; ++n) {
    for (std::size_t p = 0; p < pixels; ++p) {
      out.features(static_cast<Eigen::Index>(p), n) =
          static_cast<double>(image_bytes[std::size_t(n) * pixels + p]) / 255.0;
    }
    out.labels[n] = static_cast<int>(label_bytes[n]);
    max_label = std::max(max_label, out.labels[n]);
  }
  out.num_classes = max_label + 1;
  return out;
}

std::vector<ClientDataset> partition_label_skew(const LabeledDataset& source,
                                                const SkewConfig& cfg) {
  if (cfg.num_clients < 1) throw ConfigError("skew.num_clients must be >= 1");
  if (cfg.classes_per_client < 1) throw ConfigError("skew.classes_per_client must be >= 1");
  if (cfg.max_per_class < 1) throw ConfigError("skew.max_per_class must be >= 1");
  if (cfg.classes_per_client > source.num_classes) {
    throw ConfigError("skew.classes_per_client (" + std::to_string(cfg.classes_per_client) +
                      ") exceeds the source's class count (" +
                      std::to_string(source.num_classes) + ")");
  }

  auto pools = indices_by_class(source);
  for (int c = 0; c < source.num_classes; ++c) {
    if (pools[static_cast<std::size_t>(c)].empty()) {
      throw ConfigError("partition_label_skew: class " + std::to_string(c) +
                        " has no samples in the source dataset");
    }
    Rng pool_rng(seed_combine(cfg.seed, seed_tag::kPool, static_cast<std::uint64_t>(c)));
    pool_rng.shuffle(pools[static_cast<std::size_t>(c)]);
  }
  std::vector<std::size_t> cursors(pools.size(), 0);

  std::vector<ClientDataset> clients;
  clients.reserve(static_cast<std::size_t>(cfg.num_clients));
  std::vector<int> all_classes(static_cast<std::size_t>(source.num_classes));
  std::iota(all_classes.begin(), all_classes.end(), 0);

  for (int m = 0; m < cfg.num_clients; ++m) {
    Rng assign_rng(seed_combine(cfg.seed, seed_tag::kAssign, static_cast<std::uint64_t>(m)));
    std::vector<int> choice = all_classes;
    assign_rng.shuffle(choice);
    choice.resize(static_cast<std::size_t>(cfg.classes_per_client));
    std::sort(choice.begin(), choice.end());

    std::vector<int> taken;
    for (int c : choice) {
      auto& pool = pools[static_cast<std::size_t>(c)];
      auto& cursor = cursors[static_cast<std::size_t>(c)];
      const std::size_t want =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.max_per_class), pool.size());
      if (cfg.strict_disjoint && cursor + want > pool.size()) {
        throw ConfigError("partition_label_skew: class " + std::to_string(c) +
                          " pool exhausted under strict_disjoint (client " +
                          std::to_string(m) + ")");
      }
      for (std::size_t i = 0; i < want; ++i) {
        taken.push_back(pool[(cursor + i) % pool.size()]);
      }
      cursor = cfg.strict_disjoint ? cursor + want : (cursor + want) % pool.size();
    }

    ClientDataset client;
    client.client_id = m;
    client.data = gather(source, taken);
    client.present_classes = choice;
    clients.push_back(std::move(client));
  }
  return clients;
}

std::pair<LabeledDataset, LabeledDataset> train_test_split(const LabeledDataset& source,
                                                           double test_fraction,
                                                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  auto by_class = indices_by_class(source);
  std::vector<int> train_idx, test_idx;
  for (int c = 0; c < source.num_classes; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (pool.size() < 2) {
      throw ConfigError("train_test_split: class " + std::to_string(c) +
                        " has fewer than 2 samples");
    }
    Rng rng(seed_combine(seed, seed_tag::kSplit, static_cast<std::uint64_t>(c)));
    rng.shuffle(pool);
    const auto n = static_cast<double>(pool.size());
    const auto want = static_cast<std::size_t>(std::llround(n * test_fraction));
    const std::size_t n_test = std::clamp<std::size_t>(want, 1, pool.size() - 1);
    test_idx.insert(test_idx.end(), pool.begin(), pool.begin() + static_cast<long>(n_test));
    train_idx.insert(train_idx.end(), pool.begin() + static_cast<long>(n_test), pool.end());
  }
  return {gather(source, train_idx), gather(source, test_idx)};
}

}  // namespace fedcycle
