#include "fedcycle/server.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"

namespace fedcycle {

std::vector<int> sample_clients(int num_clients, const ServerConfig& cfg, int round) {
  if (num_clients < 1) throw ConfigError("sample_clients: num_clients must be >= 1");
  if (cfg.clients_per_round < 1 || cfg.clients_per_round > num_clients) {
    throw ConfigError("clients_per_round must lie in [1, num_clients], got " +
                      std::to_string(cfg.clients_per_round) + " of " +
                      std::to_string(num_clients));
  }
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed_combine(cfg.seed, seed_tag::kServer, static_cast<std::uint64_t>(round)));
  for (int i = 0; i < cfg.clients_per_round; ++i) {
    std::swap(ids[static_cast<std::size_t>(i)],
              ids[static_cast<std::size_t>(rng.next_int(i, num_clients - 1))]);
  }
  ids.resize(static_cast<std::size_t>(cfg.clients_per_round));
  std::sort(ids.begin(), ids.end());
  return ids;
}

ParamVector aggregate(std::span<const LocalUpdate> updates, const ServerConfig& cfg) {
  if (updates.empty()) throw std::invalid_argument("aggregate: empty update list");

  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });

  std::vector<const ParamVector*> params;
  std::vector<double> weights;
  params.reserve(updates.size());
  weights.reserve(updates.size());
  for (std::size_t i : order) {
    params.push_back(&updates[i].params);
    weights.push_back(cfg.weighting == Weighting::BySampleCount
                          ? static_cast<double>(updates[i].num_samples)
                          : 1.0);
  }
  return weighted_mean(std::span<const ParamVector* const>(params), std::span(weights));
}

ParamVector apply_server_rate(const ParamVector& prev_global, const ParamVector& aggregated,
                              double gamma, RateMode mode) {
  if (!same_layout(prev_global, aggregated)) {
    throw std::invalid_argument("apply_server_rate: parameter layouts differ");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ConfigError("apply_server_rate: gamma must be a positive finite real, got " +
                      std::to_string(gamma));
  }
  if (mode == RateMode::Literal) {
    return {aggregated.layout, gamma * aggregated.values};
  }
  return {prev_global.layout,
          prev_global.values + gamma * (aggregated.values - prev_global.values)};
}

}  // namespace fedcycle
