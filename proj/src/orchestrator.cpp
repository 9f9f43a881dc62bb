#include "fedcycle/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"

namespace fedcycle {

void validate(const RunConfig& cfg) {
  validate(cfg.model);
  validate(cfg.client);
  validate(cfg.server.schedule);
  if (cfg.num_clients < 1) throw ConfigError("federation.num_clients must be >= 1");
  if (cfg.server.clients_per_round < 1 || cfg.server.clients_per_round > cfg.num_clients) {
    throw ConfigError("federation.clients_per_round must lie in [1, num_clients]");
  }
  if (cfg.horizon < 1) throw ConfigError("federation.horizon must be >= 1");
  if (cfg.server.schedule.horizon != cfg.horizon) {
    throw ConfigError("schedule horizon (" + std::to_string(cfg.server.schedule.horizon) +
                      ") must equal federation.horizon (" + std::to_string(cfg.horizon) + ")");
  }
  if (cfg.eval_every < 1 || cfg.eval_every > cfg.horizon) {
    throw ConfigError("federation.eval_every must lie in [1, horizon]");
  }
  if (!(cfg.data.test_fraction > 0.0 && cfg.data.test_fraction < 1.0)) {
    throw ConfigError("data.test_fraction must lie in (0, 1)");
  }
  if (cfg.data.kind == DataKind::Blobs) {
    if (cfg.data.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
    if (cfg.data.input_dim != cfg.model.input_dim) {
      throw ConfigError("data.input_dim must match model.input_dim");
    }
    if (cfg.data.num_classes != cfg.model.num_classes) {
      throw ConfigError("data.num_classes must match model.num_classes");
    }
    if (cfg.data.samples_per_class < 2) {
      throw ConfigError("data.samples_per_class must be >= 2");
    }
    if (!(cfg.data.spread > 0.0)) throw ConfigError("data.spread must be > 0");
  } else {
    if (cfg.data.images_path.empty() || cfg.data.labels_path.empty()) {
      throw ConfigError("data.paths.images and data.paths.labels are required for idx data");
    }
  }
  if (cfg.data.skew.classes_per_client < 1) {
    throw ConfigError("data.skew.classes_per_client must be >= 1");
  }
  if (cfg.data.skew.max_per_class < 1) {
    throw ConfigError("data.skew.max_per_class must be >= 1");
  }
}

std::string config_digest(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << static_cast<int>(cfg.model.arch) << '|' << cfg.model.input_dim << '|'
     << cfg.model.num_classes << '|' << cfg.model.hidden_dim << '|'
     << cfg.client.batch_size << '|' << cfg.client.local_lr << '|'
     << static_cast<int>(cfg.client.strategy.kind) << '|' << cfg.client.strategy.mu << '|'
     << cfg.client.strategy.tau << '|' << cfg.client.strategy.weight << '|'
     << cfg.client.strategy.alpha << '|' << cfg.client.epochs_lo << '|'
     << cfg.client.epochs_hi << '|' << cfg.server.clients_per_round << '|'
     << static_cast<int>(cfg.server.weighting) << '|'
     << static_cast<int>(cfg.server.rate_application) << '|'
     << static_cast<int>(cfg.server.schedule.kind) << '|' << cfg.server.schedule.gamma_fixed
     << '|' << cfg.server.schedule.amplitude << '|' << cfg.server.schedule.frequency << '|'
     << cfg.server.schedule.horizon << '|' << static_cast<int>(cfg.server.schedule.eval_mode)
     << '|' << cfg.server.schedule.fourier_terms << '|' << static_cast<int>(cfg.data.kind)
     << '|' << cfg.data.num_classes << '|' << cfg.data.input_dim << '|'
     << cfg.data.samples_per_class << '|' << cfg.data.spread << '|' << cfg.data.images_path
     << '|' << cfg.data.labels_path << '|' << cfg.data.skew.classes_per_client << '|'
     << cfg.data.skew.max_per_class << '|' << cfg.data.skew.strict_disjoint << '|'
     << cfg.data.test_fraction << '|' << cfg.num_clients << '|' << cfg.horizon << '|'
     << cfg.eval_every << '|' << cfg.master_seed;
  const std::string text = os.str();
  std::uint64_t h = 0x5FEDC1C1Eull;
  for (unsigned char c : text) h = seed_combine(h, c);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

double evaluate(const ModelSpec& spec, const ParamVector& params,
                const LabeledDataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  const Eigen::MatrixXd logits = logits_batch(spec, params, test.features);
  int hits = 0;
  for (int j = 0; j < test.size(); ++j) {
    int best = 0;
    for (int c = 1; c < logits.rows(); ++c) {
      if (logits(c, j) > logits(best, j)) best = c;
    }
    if (best == test.labels[static_cast<std::size_t>(j)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

RunRecord run_federated(const RunConfig& cfg) {
  validate(cfg);
  const std::uint64_t ms = cfg.master_seed;

  // Seed tree: every subsystem gets an independent stream derived from the
  // master seed, so any component is reproducible in isolation.
  LabeledDataset source;
  if (cfg.data.kind == DataKind::Blobs) {
    source = generate_blobs(cfg.data.num_classes, cfg.data.input_dim,
                            cfg.data.samples_per_class, cfg.data.spread,
                            seed_combine(ms, seed_tag::kData));
  } else {
    source = load_idx(cfg.data.images_path, cfg.data.labels_path);
    if (source.dim() != cfg.model.input_dim) {
      throw ConfigError("loaded IDX dimension (" + std::to_string(source.dim()) +
                        ") does not match model.input_dim (" +
                        std::to_string(cfg.model.input_dim) + ")");
    }
    if (source.num_classes > cfg.model.num_classes) {
      throw ConfigError("loaded IDX has more classes than model.num_classes");
    }
    source.num_classes = cfg.model.num_classes;
  }
  if (cfg.data.skew.classes_per_client > source.num_classes) {
    throw ConfigError("data.skew.classes_per_client exceeds the data's class count");
  }

  auto [train, test] =
      train_test_split(source, cfg.data.test_fraction, seed_combine(ms, seed_tag::kSplit));

  SkewConfig skew = cfg.data.skew;
  skew.num_clients = cfg.num_clients;
  skew.seed = seed_combine(ms, seed_tag::kSkew);
  const std::vector<ClientDataset> clients = partition_label_skew(train, skew);

  ServerConfig server = cfg.server;
  server.seed = seed_combine(ms, seed_tag::kServer);
  const std::uint64_t epoch_base = seed_combine(ms, seed_tag::kEpochs);

  ParamVector global = init_params(cfg.model, seed_combine(ms, seed_tag::kInit));
  std::vector<ClientState> states(static_cast<std::size_t>(cfg.num_clients));
  for (int i = 0; i < cfg.num_clients; ++i) {
    states[static_cast<std::size_t>(i)].client_id = i;
  }

  RunRecord out;
  out.config_digest = config_digest(cfg);
  for (int round = 0; round < cfg.horizon; ++round) {
    const std::vector<int> selected = sample_clients(cfg.num_clients, server, round);

    std::vector<LocalUpdate> updates;
    updates.reserve(selected.size());
    long long work_steps = 0;
    for (int id : selected) {
      auto& state = states[static_cast<std::size_t>(id)];
      state.rng_seed = seed_combine(ms, seed_tag::kShuffle, static_cast<std::uint64_t>(round),
                                    static_cast<std::uint64_t>(id));
      const int epochs = draw_local_epochs(cfg.client, round, id, epoch_base);
      try {
        auto [update, next] =
            local_train(global, clients[static_cast<std::size_t>(id)], state, cfg.client,
                        epochs);
        const int n = update.num_samples;
        const int per_epoch = (n + cfg.client.batch_size - 1) / cfg.client.batch_size;
        work_steps += static_cast<long long>(epochs) * per_epoch;
        updates.push_back(std::move(update));
        state = std::move(next);
      } catch (const DivergenceError& e) {
        throw DivergenceError("round " + std::to_string(round) + ": " + e.what(), round,
                              e.client_id());
      }
    }

    const ParamVector aggregated = aggregate(updates, server);
    const double gamma = rate_at(server.schedule, round);
    global = apply_server_rate(global, aggregated, gamma, server.rate_application);

    if (round % cfg.eval_every == 0 || round == cfg.horizon - 1) {
      RoundRecord rec;
      rec.round = round;
      rec.gamma = gamma;
      rec.selected = selected;
      rec.test_accuracy = evaluate(cfg.model, global, test);
      double loss_sum = 0.0;
      for (const LocalUpdate& u : updates) loss_sum += u.final_local_loss;
      rec.mean_train_loss = loss_sum / static_cast<double>(updates.size());
      rec.wall_ms = work_steps;
      out.records.push_back(std::move(rec));
    }
  }
  out.final_params = std::move(global);
  return out;
}

std::optional<int> rounds_to_target(const RunRecord& run, double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw std::invalid_argument("rounds_to_target: target must lie in (0, 1]");
  }
  for (const RoundRecord& rec : run.records) {
    if (rec.test_accuracy >= target) return rec.round;
  }
  return std::nullopt;
}

double max_accuracy(const RunRecord& run) {
  if (run.records.empty()) throw std::invalid_argument("max_accuracy: empty run");
  double best = 0.0;
  for (const RoundRecord& rec : run.records) best = std::max(best, rec.test_accuracy);
  return best;
}

namespace {

// Median with absent values ranked worst. Returns nullopt when the median
// position lands on an absent value.
std::optional<double> median_rounds(const std::vector<RunRecord>& runs, double target) {
  std::vector<std::optional<int>> vals;
  vals.reserve(runs.size());
  for (const RunRecord& r : runs) vals.push_back(rounds_to_target(r, target));
  std::sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) {
    if (a.has_value() != b.has_value()) return a.has_value();
    if (!a.has_value()) return false;
    return *a < *b;
  });
  const std::size_t n = vals.size();
  if (n % 2 == 1) {
    const auto& mid = vals[n / 2];
    if (!mid) return std::nullopt;
    return static_cast<double>(*mid);
  }
  const auto& lo = vals[n / 2 - 1];
  const auto& hi = vals[n / 2];
  if (!lo || !hi) return std::nullopt;
  return (static_cast<double>(*lo) + static_cast<double>(*hi)) / 2.0;
}

}  // namespace

RepeatSummary summarize_repeats(const std::vector<RunRecord>& runs,
                                std::optional<double> target,
                                const std::vector<RunRecord>* baseline) {
  if (runs.size() < 2) {
    throw std::invalid_argument("summarize_repeats: need at least 2 runs");
  }
  if (baseline && baseline->size() != runs.size()) {
    throw std::invalid_argument("summarize_repeats: baseline length differs from runs");
  }

  RepeatSummary out;
  const auto n = static_cast<double>(runs.size());
  std::vector<double> maxima;
  maxima.reserve(runs.size());
  for (const RunRecord& r : runs) maxima.push_back(max_accuracy(r));
  out.mean_max_accuracy =
      std::accumulate(maxima.begin(), maxima.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : maxima) ss += (v - out.mean_max_accuracy) * (v - out.mean_max_accuracy);
  out.std_max_accuracy = std::sqrt(ss / (n - 1.0));

  if (target) {
    out.median_rounds_to_target = median_rounds(runs, *target);
    if (baseline) {
      const auto base_median = median_rounds(*baseline, *target);
      if (base_median && out.median_rounds_to_target) {
        const double treat = *out.median_rounds_to_target;
        if (treat == 0.0) {
          if (*base_median == 0.0) out.speedup = 1.0;
        } else {
          out.speedup = *base_median / treat;
        }
      }
    }
  }
  return out;
}

}  // namespace fedcycle
