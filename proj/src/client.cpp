#include "fedcycle/client.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"

namespace fedcycle {

void validate(const ClientConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("client.batch_size must be >= 1");
  if (!(cfg.local_lr >= 0.0) || !std::isfinite(cfg.local_lr)) {
    throw ConfigError("client.local_lr must be a finite non-negative real");
  }
  if (cfg.epochs_lo < 1) throw ConfigError("client.epoch_range lower bound must be >= 1");
  if (cfg.epochs_lo > cfg.epochs_hi) {
    throw ConfigError("client.epoch_range must satisfy lo <= hi");
  }
  validate(cfg.strategy);
}

int draw_local_epochs(const ClientConfig& cfg, int round, int client_id,
                      std::uint64_t base_seed) {
  validate(cfg);
  const std::uint64_t h =
      seed_combine(base_seed, seed_tag::kEpochs, static_cast<std::uint64_t>(round),
                   static_cast<std::uint64_t>(client_id));
  const auto span =
      static_cast<std::uint64_t>(cfg.epochs_hi - cfg.epochs_lo) + 1;
  const auto wide = static_cast<unsigned __int128>(h) * span;
  return cfg.epochs_lo + static_cast<int>(static_cast<std::uint64_t>(wide >> 64));
}

std::pair<LocalUpdate, ClientState> local_train(const ParamVector& global_params,
                                                const ClientDataset& dataset,
                                                const ClientState& state,
                                                const ClientConfig& cfg, int epochs) {
  validate(cfg);
  if (epochs < 1) throw ConfigError("local_train: epochs must be >= 1");
  const int n = dataset.data.size();
  if (n == 0) throw ConfigError("local_train: client dataset is empty");
  if (global_params.layout.param_count() != global_params.values.size()) {
    throw std::invalid_argument("local_train: malformed global parameter vector");
  }
  if (dataset.data.dim() != global_params.layout.input_dim) {
    throw std::invalid_argument("local_train: dataset dimension does not match model");
  }
  if (state.prev_local_params && !same_layout(*state.prev_local_params, global_params)) {
    throw std::invalid_argument("local_train: prev_local_params layout mismatch");
  }

  const ModelSpec& spec = global_params.layout;
  // Moon's bootstrap: a client never selected before contributes a zero
  // previous model, which the zero-vector cosine convention maps to s_p = 0.
  const ParamVector zero_prev{spec, Eigen::VectorXd::Zero(spec.param_count())};
  StrategyContext ctx;
  ctx.global_params = &global_params;
  ctx.prev_local_params = state.prev_local_params ? &*state.prev_local_params : &zero_prev;
  ctx.present_classes = dataset.present_classes;

  ParamVector params = global_params;  // theta^n <- theta, fresh every round
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  const int batch_size = std::min(cfg.batch_size, n);
  Eigen::MatrixXd batch(dataset.data.dim(), batch_size);
  std::vector<int> batch_labels(static_cast<std::size_t>(batch_size));

  double final_epoch_loss = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(seed_combine(state.rng_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += batch_size) {
      const int count = std::min(batch_size, n - start);
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<std::size_t>(start + i)];
        batch.col(i) = dataset.data.features.col(src);
        batch_labels[static_cast<std::size_t>(i)] =
            dataset.data.labels[static_cast<std::size_t>(src)];
      }
      LossGrad lg;
      try {
        lg = loss_and_grad(spec, cfg.strategy, params, batch.leftCols(count),
                           std::span<const int>(batch_labels.data(),
                                                static_cast<std::size_t>(count)),
                           ctx);
      } catch (const DivergenceError&) {
        throw DivergenceError("client " + std::to_string(dataset.client_id) +
                                  " diverged: non-finite loss",
                              -1, dataset.client_id);
      }
      if (!lg.grad.values.allFinite()) {
        throw DivergenceError("client " + std::to_string(dataset.client_id) +
                                  " diverged: non-finite gradient",
                              -1, dataset.client_id);
      }
      params.values -= cfg.local_lr * lg.grad.values;
      epoch_loss += lg.loss * static_cast<double>(count);
    }
    final_epoch_loss = epoch_loss / static_cast<double>(n);
  }

  LocalUpdate update;
  update.client_id = dataset.client_id;
  update.params = params;
  update.num_samples = n;
  update.epochs_used = epochs;
  update.final_local_loss = final_epoch_loss;

  ClientState next = state;
  next.prev_local_params = std::move(params);
  next.rng_seed = mix64(state.rng_seed + kGolden);
  return {std::move(update), std::move(next)};
}

}  // namespace fedcycle
