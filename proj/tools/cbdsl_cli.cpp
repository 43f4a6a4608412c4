#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "cbdsl/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

int cmd_run(const std::string& config_path, const std::string& output_dir, std::optional<std::uint64_t> seed) {
  cbdsl::ExperimentConfig cfg;
  try {
    cfg = cbdsl::load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (seed) cfg.seeds = {*seed};
    cfg.validate();
  } catch (const cbdsl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  try {
    const auto summary = cbdsl::run_experiment(cfg);
    for (const auto& r : summary)
      std::cout << r.variant << " seed " << r.seed << ": accuracy " << cbdsl::format_double(r.final_accuracy)
                << ", vector uplinks " << r.total_vector_uplinks << ", detections " << r.total_detections
                << '\n';
    std::cout << "wrote " << (cfg.output_dir / "summary.csv").string() << '\n';
  } catch (const cbdsl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

int cmd_report(const std::filesystem::path& dir) {
  try {
    std::ifstream in(dir / "summary.csv");
    if (!in) throw std::runtime_error("cannot open " + (dir / "summary.csv").string());
    const auto rows = cbdsl::report_communication(cbdsl::read_summary_csv(in), std::cerr);
    std::ostringstream csv;
    cbdsl::write_communication_csv(csv, rows);
    std::ofstream out(dir / "communication.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / "communication.csv").string());
    out << csv.str();
    std::cout << csv.str();
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid PSO and SGD swarm training simulator"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  std::optional<std::uint64_t> seed_override;
  auto* run = app.add_subcommand("run", "Run every variant and seed of an experiment config");
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_option("--output-dir", output_dir, "Override run.output_dir");
  run->add_option("--seed-override", seed_override, "Run a single seed instead of run.seeds");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Communication ratio table from a summary.csv");
  report->add_option("output-dir", report_dir, "Directory holding summary.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  if (*run) return cmd_run(config_path, output_dir, seed_override);
  return cmd_report(report_dir);
}
