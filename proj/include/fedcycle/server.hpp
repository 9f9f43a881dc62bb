#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedcycle/client.hpp"
#include "fedcycle/model.hpp"
#include "fedcycle/schedule.hpp"

namespace fedcycle {

enum class Weighting { BySampleCount, Uniform };

/// How the server rate enters the update: Literal scales the aggregated
/// model itself, Delta scales the aggregation-induced step from the
/// previous global model.
enum class RateMode { Literal, Delta };

struct ServerConfig {
  int clients_per_round = 1;  // M
  Weighting weighting = Weighting::BySampleCount;
  RateMode rate_application = RateMode::Delta;
  ScheduleConfig schedule;
  std::uint64_t seed = 0;

  bool operator==(const ServerConfig&) const = default;
};

/// M distinct client ids drawn uniformly without replacement, sorted
/// ascending, deterministic in (cfg.seed, round).
std::vector<int> sample_clients(int num_clients, const ServerConfig& cfg, int round);

/// ServerOpt: weighted (by sample count) or plain mean of the local models.
/// Internally sorts by client id and accumulates pairwise, so the result is
/// independent of input order.
ParamVector aggregate(std::span<const LocalUpdate> updates, const ServerConfig& cfg);

/// gamma * aggregated (Literal) or prev + gamma * (aggregated - prev) (Delta).
ParamVector apply_server_rate(const ParamVector& prev_global, const ParamVector& aggregated,
                              double gamma, RateMode mode);

}  // namespace fedcycle
