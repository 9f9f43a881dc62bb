#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "fedcycle/errors.hpp"
#include "fedcycle/experiment.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fedcycle::IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int classify(const std::exception& e) {
  if (dynamic_cast<const fedcycle::DivergenceError*>(&e)) return 2;
  if (dynamic_cast<const fedcycle::IoError*>(&e)) return 3;
  if (dynamic_cast<const fedcycle::DataError*>(&e)) return 3;
  return 1;  // config-class failure
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedcycle: federated-learning simulator with cyclic server-side aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  int jobs = 1;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;

  CLI::App* run = app.add_subcommand("run", "execute the experiment described by a config");
  run->add_option("--config", config_path, "path to the JSON config")->required();
  run->add_option("--jobs", jobs, "parallel runs (grid cells x repeats)")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", seed_override, "override master_seed");
  run->add_option("--out", out_override, "override experiment.output_dir");

  CLI::App* validate = app.add_subcommand("validate", "parse and validate a config");
  validate->add_option("--config", config_path, "path to the JSON config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    fedcycle::ExperimentConfig cfg = fedcycle::parse_config(read_file(config_path));
    if (seed_override) cfg.run.master_seed = *seed_override;
    if (out_override) cfg.output_dir = *out_override;

    if (app.got_subcommand(validate)) {
      std::cout << fedcycle::emit_config(cfg);
      return 0;
    }

    const fedcycle::ExperimentReport report = fedcycle::run_experiment(cfg, jobs);
    for (const fedcycle::CellReport& cell : report.cells) {
      if (cell.ok) {
        std::cout << cell.name << ": mean max accuracy " << cell.mean_max_accuracy;
        if (cell.median_rounds_to_target) {
          std::cout << ", median rounds-to-target " << *cell.median_rounds_to_target;
        }
        std::cout << '\n';
      } else {
        std::cout << cell.name << ": FAILED (" << cell.error << ")\n";
      }
    }
    if (report.best_cell) std::cout << "best cell: " << *report.best_cell << '\n';
    return report.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return classify(e);
  }
}
