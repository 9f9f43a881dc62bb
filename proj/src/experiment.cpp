#include "fedcycle/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <thread>
#include <tuple>

#include "fedcycle/errors.hpp"
#include "fedcycle/rng.hpp"

namespace fedcycle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown config key '" +
                        (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

const json* find(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

int get_int(const json& obj, const std::string& section, const std::string& key,
            int fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) fail(section + "." + key, "expected an integer");
  return v->get<int>();
}

int require_int(const json& obj, const std::string& section, const std::string& key) {
  const json* v = find(obj, key);
  if (!v) fail(section + "." + key, "required key is missing");
  if (!v->is_number_integer()) fail(section + "." + key, "expected an integer");
  return v->get<int>();
}

double get_real(const json& obj, const std::string& section, const std::string& key,
                double fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) fail(section + "." + key, "expected a number");
  return v->get<double>();
}

std::string get_string(const json& obj, const std::string& section, const std::string& key,
                       const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) fail(section + "." + key, "expected a string");
  return v->get<std::string>();
}

void forbid(const json& obj, const std::string& section, const std::string& key,
            const std::string& why) {
  if (find(obj, key)) fail(section + "." + key, "not allowed " + why);
}

Arch parse_arch(const std::string& s) {
  if (s == "softmax_linear") return Arch::SoftmaxLinear;
  if (s == "mlp1") return Arch::Mlp1;
  fail("model.arch", "expected 'softmax_linear' or 'mlp1', got '" + s + "'");
}

LossStrategy::Kind parse_strategy(const std::string& s) {
  if (s == "fedavg") return LossStrategy::Kind::FedAvg;
  if (s == "fedprox") return LossStrategy::Kind::FedProx;
  if (s == "moon") return LossStrategy::Kind::Moon;
  if (s == "fedrs") return LossStrategy::Kind::FedRs;
  fail("client.strategy", "expected one of fedavg|fedprox|moon|fedrs, got '" + s + "'");
}

const char* strategy_name(LossStrategy::Kind k) {
  switch (k) {
    case LossStrategy::Kind::FedAvg: return "fedavg";
    case LossStrategy::Kind::FedProx: return "fedprox";
    case LossStrategy::Kind::Moon: return "moon";
    case LossStrategy::Kind::FedRs: return "fedrs";
  }
  return "fedavg";
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError("config syntax error at line " + std::to_string(line) + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  check_keys(doc, "",
             {"model", "data", "federation", "client", "server", "schedule", "experiment",
              "master_seed"});

  ExperimentConfig cfg;
  RunConfig& run = cfg.run;

  // model
  const json* model = find(doc, "model");
  if (!model) throw ConfigError("config section 'model' is required");
  check_keys(*model, "model", {"arch", "input_dim", "num_classes", "hidden_dim"});
  run.model.arch = parse_arch(get_string(*model, "model", "arch", "softmax_linear"));
  run.model.input_dim = require_int(*model, "model", "input_dim");
  run.model.num_classes = require_int(*model, "model", "num_classes");
  run.model.hidden_dim = get_int(*model, "model", "hidden_dim", 0);

  // data
  const json* data = find(doc, "data");
  if (!data) throw ConfigError("config section 'data' is required");
  check_keys(*data, "data",
             {"kind", "paths", "num_classes", "samples_per_class", "spread", "skew",
              "test_fraction"});
  const std::string kind = get_string(*data, "data", "kind", "blobs");
  if (kind == "blobs") {
    run.data.kind = DataKind::Blobs;
    forbid(*data, "data", "paths", "for blobs data");
    run.data.num_classes = get_int(*data, "data", "num_classes", run.model.num_classes);
    run.data.input_dim = run.model.input_dim;
    run.data.samples_per_class = get_int(*data, "data", "samples_per_class", 500);
    run.data.spread = get_real(*data, "data", "spread", 0.3);
  } else if (kind == "idx") {
    run.data.kind = DataKind::Idx;
    forbid(*data, "data", "num_classes", "for idx data");
    forbid(*data, "data", "samples_per_class", "for idx data");
    forbid(*data, "data", "spread", "for idx data");
    const json* paths = find(*data, "paths");
    if (!paths) fail("data.paths", "required for idx data");
    check_keys(*paths, "data.paths", {"images", "labels"});
    run.data.images_path = get_string(*paths, "data.paths", "images", "");
    run.data.labels_path = get_string(*paths, "data.paths", "labels", "");
    if (run.data.images_path.empty() || run.data.labels_path.empty()) {
      fail("data.paths", "both images and labels are required");
    }
  } else {
    fail("data.kind", "expected 'blobs' or 'idx', got '" + kind + "'");
  }
  if (const json* skew = find(*data, "skew")) {
    check_keys(*skew, "data.skew", {"classes_per_client", "max_per_class", "strict"});
    run.data.skew.classes_per_client =
        get_int(*skew, "data.skew", "classes_per_client", 4);
    run.data.skew.max_per_class = get_int(*skew, "data.skew", "max_per_class", 100);
    const json* strict = find(*skew, "strict");
    if (strict) {
      if (!strict->is_boolean()) fail("data.skew.strict", "expected a boolean");
      run.data.skew.strict_disjoint = strict->get<bool>();
    }
  }
  run.data.test_fraction = get_real(*data, "data", "test_fraction", 0.2);

  // federation
  const json* fed = find(doc, "federation");
  if (!fed) throw ConfigError("config section 'federation' is required");
  check_keys(*fed, "federation",
             {"num_clients", "clients_per_round", "horizon", "eval_every"});
  run.num_clients = require_int(*fed, "federation", "num_clients");
  run.server.clients_per_round = require_int(*fed, "federation", "clients_per_round");
  run.horizon = require_int(*fed, "federation", "horizon");
  run.eval_every = get_int(*fed, "federation", "eval_every", 1);

  // client
  if (const json* client = find(doc, "client")) {
    check_keys(*client, "client",
               {"batch_size", "local_lr", "strategy", "strategy_params", "epoch_range"});
    run.client.batch_size = get_int(*client, "client", "batch_size", 32);
    run.client.local_lr = get_real(*client, "client", "local_lr", 0.05);
    if (!(run.client.local_lr > 0.0)) fail("client.local_lr", "must be > 0");
    run.client.strategy.kind =
        parse_strategy(get_string(*client, "client", "strategy", "fedavg"));
    if (const json* sp = find(*client, "strategy_params")) {
      check_keys(*sp, "client.strategy_params", {"mu", "tau", "weight", "alpha"});
      run.client.strategy.mu = get_real(*sp, "client.strategy_params", "mu", 0.01);
      run.client.strategy.tau = get_real(*sp, "client.strategy_params", "tau", 0.5);
      run.client.strategy.weight = get_real(*sp, "client.strategy_params", "weight", 1.0);
      run.client.strategy.alpha = get_real(*sp, "client.strategy_params", "alpha", 0.5);
    }
    if (const json* er = find(*client, "epoch_range")) {
      if (!er->is_array() || er->size() != 2 || !(*er)[0].is_number_integer() ||
          !(*er)[1].is_number_integer()) {
        fail("client.epoch_range", "expected [lo, hi] integers");
      }
      run.client.epochs_lo = (*er)[0].get<int>();
      run.client.epochs_hi = (*er)[1].get<int>();
    }
  }

  // server
  if (const json* server = find(doc, "server")) {
    check_keys(*server, "server", {"weighting", "rate_application"});
    const std::string w = get_string(*server, "server", "weighting", "by_sample_count");
    if (w == "by_sample_count") {
      run.server.weighting = Weighting::BySampleCount;
    } else if (w == "uniform") {
      run.server.weighting = Weighting::Uniform;
    } else {
      fail("server.weighting", "expected 'by_sample_count' or 'uniform', got '" + w + "'");
    }
    const std::string r = get_string(*server, "server", "rate_application", "delta");
    if (r == "delta") {
      run.server.rate_application = RateMode::Delta;
    } else if (r == "literal") {
      run.server.rate_application = RateMode::Literal;
    } else {
      fail("server.rate_application", "expected 'delta' or 'literal', got '" + r + "'");
    }
  }

  // schedule
  if (const json* sched = find(doc, "schedule")) {
    check_keys(*sched, "schedule",
               {"kind", "gamma_fixed", "amplitude", "frequency", "eval_mode",
                "fourier_terms"});
    const std::string k = get_string(*sched, "schedule", "kind", "fixed");
    if (k == "fixed") {
      run.server.schedule.kind = ScheduleKind::Fixed;
    } else if (k == "cyclic") {
      run.server.schedule.kind = ScheduleKind::Cyclic;
    } else {
      fail("schedule.kind", "expected 'fixed' or 'cyclic', got '" + k + "'");
    }
    run.server.schedule.gamma_fixed = get_real(*sched, "schedule", "gamma_fixed", 1.0);
    run.server.schedule.amplitude = get_real(*sched, "schedule", "amplitude", 0.0);
    run.server.schedule.frequency = get_real(*sched, "schedule", "frequency", 1.0);
    const std::string mode = get_string(*sched, "schedule", "eval_mode", "closed_form");
    if (mode == "closed_form") {
      run.server.schedule.eval_mode = ScheduleEval::ClosedForm;
    } else if (mode == "fourier") {
      run.server.schedule.eval_mode = ScheduleEval::FourierTruncated;
    } else {
      fail("schedule.eval_mode", "expected 'closed_form' or 'fourier', got '" + mode + "'");
    }
    run.server.schedule.fourier_terms = get_int(*sched, "schedule", "fourier_terms", 32);
  }
  run.server.schedule.horizon = run.horizon;

  // experiment
  if (const json* exp = find(doc, "experiment")) {
    check_keys(*exp, "experiment",
               {"repeats", "target_accuracy", "grid", "output_dir"});
    cfg.repeats = get_int(*exp, "experiment", "repeats", 6);
    if (const json* t = find(*exp, "target_accuracy")) {
      if (!t->is_number()) fail("experiment.target_accuracy", "expected a number");
      cfg.target_accuracy = t->get<double>();
    }
    if (const json* grid = find(*exp, "grid")) {
      check_keys(*grid, "experiment.grid", {"amplitudes", "frequencies"});
      GridSpec gs;
      const json* amps = find(*grid, "amplitudes");
      const json* freqs = find(*grid, "frequencies");
      if (!amps || !amps->is_array() || amps->empty()) {
        fail("experiment.grid.amplitudes", "expected a non-empty array of numbers");
      }
      if (!freqs || !freqs->is_array() || freqs->empty()) {
        fail("experiment.grid.frequencies", "expected a non-empty array of numbers");
      }
      for (const auto& a : *amps) {
        if (!a.is_number()) fail("experiment.grid.amplitudes", "expected numbers");
        gs.amplitudes.push_back(a.get<double>());
      }
      for (const auto& f : *freqs) {
        if (!f.is_number()) fail("experiment.grid.frequencies", "expected numbers");
        gs.frequencies.push_back(f.get<double>());
      }
      cfg.grid = std::move(gs);
    }
    cfg.output_dir = get_string(*exp, "experiment", "output_dir", "out");
  }

  // master_seed
  if (const json* seed = find(doc, "master_seed")) {
    if (!seed->is_number_integer()) throw ConfigError("config field 'master_seed': expected an integer");
    run.master_seed = seed->get<std::uint64_t>();
  }

  // cross-field validation
  validate(run);
  if (cfg.repeats < 1) fail("experiment.repeats", "must be >= 1");
  if (cfg.target_accuracy && !(*cfg.target_accuracy > 0.0 && *cfg.target_accuracy <= 1.0)) {
    fail("experiment.target_accuracy", "must lie in (0, 1]");
  }
  if (cfg.grid) {
    for (double a : cfg.grid->amplitudes) {
      if (!(a > 0.0 && a <= run.server.schedule.gamma_fixed)) {
        fail("experiment.grid.amplitudes",
             "amplitudes must lie in (0, gamma_fixed]; got " + fmt_short(a));
      }
    }
    for (double f : cfg.grid->frequencies) {
      if (!(f > 0.0) || !std::isfinite(f)) {
        fail("experiment.grid.frequencies", "frequencies must be positive reals");
      }
    }
  }
  if (cfg.output_dir.empty()) fail("experiment.output_dir", "must be non-empty");
  return cfg;
}

std::string emit_config(const ExperimentConfig& cfg) {
  const RunConfig& run = cfg.run;
  json doc;
  json model;
  model["arch"] = run.model.arch == Arch::SoftmaxLinear ? "softmax_linear" : "mlp1";
  model["input_dim"] = run.model.input_dim;
  model["num_classes"] = run.model.num_classes;
  if (run.model.arch == Arch::Mlp1) model["hidden_dim"] = run.model.hidden_dim;
  doc["model"] = std::move(model);

  json data;
  if (run.data.kind == DataKind::Blobs) {
    data["kind"] = "blobs";
    data["num_classes"] = run.data.num_classes;
    data["samples_per_class"] = run.data.samples_per_class;
    data["spread"] = run.data.spread;
  } else {
    data["kind"] = "idx";
    data["paths"] = {{"images", run.data.images_path}, {"labels", run.data.labels_path}};
  }
  data["skew"] = {{"classes_per_client", run.data.skew.classes_per_client},
                  {"max_per_class", run.data.skew.max_per_class},
                  {"strict", run.data.skew.strict_disjoint}};
  data["test_fraction"] = run.data.test_fraction;
  doc["data"] = std::move(data);

  doc["federation"] = {{"num_clients", run.num_clients},
                       {"clients_per_round", run.server.clients_per_round},
                       {"horizon", run.horizon},
                       {"eval_every", run.eval_every}};

  doc["client"] = {{"batch_size", run.client.batch_size},
                   {"local_lr", run.client.local_lr},
                   {"strategy", strategy_name(run.client.strategy.kind)},
                   {"strategy_params",
                    {{"mu", run.client.strategy.mu},
                     {"tau", run.client.strategy.tau},
                     {"weight", run.client.strategy.weight},
                     {"alpha", run.client.strategy.alpha}}},
                   {"epoch_range", {run.client.epochs_lo, run.client.epochs_hi}}};

  doc["server"] = {
      {"weighting",
       run.server.weighting == Weighting::BySampleCount ? "by_sample_count" : "uniform"},
      {"rate_application",
       run.server.rate_application == RateMode::Delta ? "delta" : "literal"}};

  doc["schedule"] = {
      {"kind", run.server.schedule.kind == ScheduleKind::Fixed ? "fixed" : "cyclic"},
      {"gamma_fixed", run.server.schedule.gamma_fixed},
      {"amplitude", run.server.schedule.amplitude},
      {"frequency", run.server.schedule.frequency},
      {"eval_mode", run.server.schedule.eval_mode == ScheduleEval::ClosedForm
                        ? "closed_form"
                        : "fourier"},
      {"fourier_terms", run.server.schedule.fourier_terms}};

  json exp;
  exp["repeats"] = cfg.repeats;
  exp["output_dir"] = cfg.output_dir;
  if (cfg.target_accuracy) exp["target_accuracy"] = *cfg.target_accuracy;
  if (cfg.grid) {
    exp["grid"] = {{"amplitudes", cfg.grid->amplitudes},
                   {"frequencies", cfg.grid->frequencies}};
  }
  doc["experiment"] = std::move(exp);
  doc["master_seed"] = run.master_seed;
  return doc.dump(2) + "\n";
}

void emit_round_csv(const RunRecord& run, const std::string& path) {
  if (run.records.empty()) throw std::invalid_argument("emit_round_csv: empty run record");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kRoundCsvHeader << '\n';
  for (const RoundRecord& rec : run.records) {
    out << rec.round << ',' << fmt17(rec.gamma) << ',' << fmt17(rec.test_accuracy) << ','
        << fmt17(rec.mean_train_loss) << ',' << rec.wall_ms << ',';
    for (std::size_t i = 0; i < rec.selected.size(); ++i) {
      if (i > 0) out << ';';
      out << rec.selected[i];
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

namespace {

struct CellPlan {
  std::string name;
  RunConfig run;
  std::optional<double> amplitude;
  std::optional<double> frequency;
};

struct TaskResult {
  bool ok = false;
  std::string error;
  int error_code = 0;
  RunRecord record;
};

constexpr const char* kPlotScript = R"(#!/usr/bin/env python3
"""Plot test accuracy per round for every cell/repeat under this directory."""
import csv
import pathlib
import sys

import matplotlib.pyplot as plt

root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
for csv_path in sorted(root.glob("*/*/rounds.csv")):
    cell, repeat = csv_path.parts[-3], csv_path.parts[-2]
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    xs = [int(r["round"]) for r in rows]
    ys = [float(r["test_accuracy"]) for r in rows]
    plt.plot(xs, ys, alpha=0.6, label=f"{cell}/{repeat}")
plt.xlabel("global round")
plt.ylabel("test accuracy")
plt.legend(fontsize=6)
plt.tight_layout()
plt.savefig(root / "rounds.png", dpi=150)
print(f"wrote {root / 'rounds.png'}")
)";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

json cell_summary_json(const CellPlan& cell, const std::vector<RunRecord>& runs,
                       const std::optional<double>& target, CellReport& report) {
  json j;
  j["cell"] = cell.name;
  if (cell.amplitude) j["amplitude"] = *cell.amplitude;
  if (cell.frequency) j["frequency"] = *cell.frequency;
  j["repeats"] = runs.size();
  std::vector<double> maxima;
  for (const RunRecord& r : runs) maxima.push_back(max_accuracy(r));
  j["max_accuracies"] = maxima;
  if (runs.size() >= 2) {
    RepeatSummary s = summarize_repeats(runs, target);
    report.mean_max_accuracy = s.mean_max_accuracy;
    report.std_max_accuracy = s.std_max_accuracy;
    report.median_rounds_to_target = s.median_rounds_to_target;
  } else {
    report.mean_max_accuracy = maxima.front();
    if (target) {
      if (const auto r = rounds_to_target(runs.front(), *target)) {
        report.median_rounds_to_target = static_cast<double>(*r);
      }
    }
  }
  j["mean_max_accuracy"] = report.mean_max_accuracy;
  if (report.std_max_accuracy) {
    j["std_max_accuracy"] = *report.std_max_accuracy;
  } else {
    j["std_max_accuracy"] = nullptr;
  }
  if (target) {
    if (report.median_rounds_to_target) {
      j["median_rounds_to_target"] = *report.median_rounds_to_target;
    } else {
      j["median_rounds_to_target"] = nullptr;
    }
  }
  return j;
}

int classify_exception(std::exception_ptr ep, std::string& message) {
  try {
    std::rethrow_exception(ep);
  } catch (const DivergenceError& e) {
    message = e.what();
    return 2;
  } catch (const IoError& e) {
    message = e.what();
    return 3;
  } catch (const DataError& e) {
    message = e.what();
    return 3;
  } catch (const std::exception& e) {
    message = e.what();
    return 1;
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs) {
  std::vector<CellPlan> cells;
  if (cfg.grid) {
    for (double a : cfg.grid->amplitudes) {
      for (double f : cfg.grid->frequencies) {
        CellPlan cell;
        cell.name = "a" + fmt_short(a) + "_f" + fmt_short(f);
        cell.run = cfg.run;
        cell.run.server.schedule.kind = ScheduleKind::Cyclic;
        cell.run.server.schedule.amplitude = a;
        cell.run.server.schedule.frequency = f;
        cell.amplitude = a;
        cell.frequency = f;
        cells.push_back(std::move(cell));
      }
    }
  } else {
    CellPlan cell;
    cell.name = cfg.run.server.schedule.kind == ScheduleKind::Fixed ? "fixed" : "cyclic";
    cell.run = cfg.run;
    cells.push_back(std::move(cell));
  }

  const fs::path out_dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int r = 0; r < cfg.repeats; ++r) {
      fs::create_directories(out_dir / cells[c].name / std::to_string(r), ec);
      if (ec) throw IoError("cannot create run directory under " + out_dir.string());
    }
  }
  write_text(out_dir / "config.echo", emit_config(cfg));
  write_text(out_dir / "plot_rounds.py", kPlotScript);

  struct Task {
    std::size_t cell;
    int repeat;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int r = 0; r < cfg.repeats; ++r) tasks.push_back({c, r});
  }
  std::vector<TaskResult> results(tasks.size());

  std::atomic<std::size_t> cursor{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      TaskResult& slot = results[i];
      try {
        RunConfig run_cfg = cells[task.cell].run;
        // The repeat index folds into the master seed so repeats are
        // independent while staying paired across cells.
        run_cfg.master_seed = seed_combine(cfg.run.master_seed, seed_tag::kRepeat,
                                           static_cast<std::uint64_t>(task.repeat));
        slot.record = run_federated(run_cfg);
        const fs::path csv_path =
            out_dir / cells[task.cell].name / std::to_string(task.repeat) / "rounds.csv";
        emit_round_csv(slot.record, csv_path.string());
        slot.ok = true;
      } catch (...) {
        slot.error_code = classify_exception(std::current_exception(), slot.error);
      }
    }
  };

  const int worker_count = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(worker_count));
  for (int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  ExperimentReport report;
  json report_cells = json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellReport cell_report;
    cell_report.name = cells[c].name;
    cell_report.amplitude = cells[c].amplitude;
    cell_report.frequency = cells[c].frequency;

    std::vector<RunRecord> runs;
    std::string first_error;
    int first_code = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].cell != c) continue;
      if (results[i].ok) {
        runs.push_back(results[i].record);
      } else if (first_code == 0) {
        first_code = results[i].error_code;
        first_error = results[i].error;
      }
    }
    cell_report.ok = first_code == 0;
    cell_report.error = first_error;
    cell_report.error_code = first_code;

    json cell_json;
    if (cell_report.ok) {
      cell_json = cell_summary_json(cells[c], runs, cfg.target_accuracy, cell_report);
      write_text(out_dir / cells[c].name / "summary.json", cell_json.dump(2) + "\n");
    } else {
      cell_json["cell"] = cells[c].name;
      cell_json["error"] = first_error;
    }
    cell_json["status"] = cell_report.ok ? "ok" : "error";
    report_cells.push_back(std::move(cell_json));
    report.cells.push_back(std::move(cell_report));
  }

  // Best cell: lowest median rounds-to-target (absent ranks worst), then
  // higher mean max-accuracy, then lower amplitude, then lower frequency.
  if (cfg.grid) {
    const CellReport* best = nullptr;
    for (const CellReport& cand : report.cells) {
      if (!cand.ok) continue;
      if (!best) {
        best = &cand;
        continue;
      }
      const double med_cand =
          cand.median_rounds_to_target.value_or(std::numeric_limits<double>::infinity());
      const double med_best =
          best->median_rounds_to_target.value_or(std::numeric_limits<double>::infinity());
      const auto cand_key = std::make_tuple(med_cand, -cand.mean_max_accuracy,
                                            *cand.amplitude, *cand.frequency);
      const auto best_key = std::make_tuple(med_best, -best->mean_max_accuracy,
                                            *best->amplitude, *best->frequency);
      if (cand_key < best_key) best = &cand;
    }
    if (best) report.best_cell = best->name;
  }

  json report_json;
  report_json["cells"] = std::move(report_cells);
  if (report.best_cell) {
    const auto it = std::find_if(report.cells.begin(), report.cells.end(),
                                 [&](const CellReport& r) { return r.name == *report.best_cell; });
    json best;
    best["cell"] = *report.best_cell;
    best["amplitude"] = *it->amplitude;
    best["frequency"] = *it->frequency;
    best["mean_max_accuracy"] = it->mean_max_accuracy;
    if (it->median_rounds_to_target) {
      best["median_rounds_to_target"] = *it->median_rounds_to_target;
    } else {
      best["median_rounds_to_target"] = nullptr;
    }
    report_json["best_cell"] = std::move(best);
  }
  write_text(out_dir / "report.json", report_json.dump(2) + "\n");

  for (const CellReport& cell : report.cells) {
    if (cell.error_code == 2) report.exit_code = 2;
  }
  if (report.exit_code == 0) {
    for (const CellReport& cell : report.cells) {
      if (cell.error_code == 3) report.exit_code = 3;
    }
  }
  if (report.exit_code == 0) {
    for (const CellReport& cell : report.cells) {
      if (cell.error_code != 0) report.exit_code = cell.error_code;
    }
  }
  return report;
}

}  // namespace fedcycle
