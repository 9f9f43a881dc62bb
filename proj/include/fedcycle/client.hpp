#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "fedcycle/data.hpp"
#include "fedcycle/model.hpp"

namespace fedcycle {

struct ClientConfig {
  int batch_size = 32;
  double local_lr = 0.05;
  LossStrategy strategy;
  int epochs_lo = 1;  // inclusive range for the per-round epoch budget L
  int epochs_hi = 5;

  bool operator==(const ClientConfig&) const = default;
};

void validate(const ClientConfig& cfg);

struct ClientState {
  int client_id = 0;
  std::optional<ParamVector> prev_local_params;  // Moon's previous local model
  std::uint64_t rng_seed = 0;
};

struct LocalUpdate {
  int client_id = 0;
  ParamVector params;
  int num_samples = 0;
  int epochs_used = 0;
  double final_local_loss = 0.0;
};

/// Uniform epoch budget in [epochs_lo, epochs_hi], deterministic in
/// (base_seed, round, client_id) via a counter-based mix.
int draw_local_epochs(const ClientConfig& cfg, int round, int client_id,
                      std::uint64_t base_seed);

/// Local mini-batch SGD from the broadcast parameters: per epoch a seeded
/// shuffle, batches of batch_size (last may be short), theta -= lr * grad.
/// Returns the update and the successor state (prev_local_params advanced to
/// the final parameters, rng_seed advanced).
std::pair<LocalUpdate, ClientState> local_train(const ParamVector& global_params,
                                                const ClientDataset& dataset,
                                                const ClientState& state,
                                                const ClientConfig& cfg, int epochs);

}  // namespace fedcycle
