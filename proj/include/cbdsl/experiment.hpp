#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cbdsl/baselines.hpp"

namespace cbdsl {

enum class DataSource { synthetic, idx };

struct DataOptions {
  DataSource source = DataSource::synthetic;
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;  // dataset seed; partitions follow the run seed
  std::size_t per_class = 1000;
  std::size_t dim = 20;
  double separation = 3.0;
  std::size_t test_per_class = 100;
};

struct PartitionOptions {
  PartitionMode mode = PartitionMode::shard;
  std::size_t samples_per_worker = 300;  // iid
  std::size_t num_shards = 66;           // shard
  std::size_t shards_per_worker = 2;     // shard
  std::size_t global_train = 0;
  std::size_t global_score = 0;
};

struct ExperimentConfig {
  DataOptions data;
  PartitionOptions partition;
  ModelSpec model;  // input_dim and num_classes are filled from the data
  HyperParameters h;
  std::vector<VariantId> variants;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "out";
  VariantOptions options;

  // Throws ConfigError.
  void validate() const;
};

// INI-style file with sections [data] [partition] [model] [hyper] [run]
// [attack] [diagnostics] [pso]. Unknown sections or keys are rejected.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

// Dataset, partition, shared sets and initial parameters for one seed.
ExperimentSetup build_setup(const ExperimentConfig& cfg, std::uint64_t seed);

struct SummaryRow {
  std::string variant;
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  double final_f_g = 0.0;
  std::size_t total_scalar_uplinks = 0;
  std::size_t total_vector_uplinks = 0;
  std::size_t total_broadcasts = 0;
  std::size_t total_detections = 0;
  std::size_t rounds = 0;
  std::uint64_t partition_digest = 0;
  std::uint64_t init_digest = 0;
};

SummaryRow summarize(const VariantResult& r, std::uint64_t seed);

// CSV writers. Column order is fixed.
void write_round_csv(std::ostream& out, const std::vector<RoundRecord>& records);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_diagnostics_csv(std::ostream& out, const DiagnosticsReport& report);
void write_diagnostics_summary(std::ostream& out, const DiagnosticsReport& report, const HyperParameters& h);

std::vector<SummaryRow> read_summary_csv(std::istream& in);

// Runs every (variant, seed) pair and writes
//   <out>/runs/<variant>_<seed>.csv, <out>/runs/<variant>_<seed>_diag*.csv,
//   <out>/summary.csv.
std::vector<SummaryRow> run_experiment(const ExperimentConfig& cfg);

struct CommunicationRow {
  std::uint64_t seed = 0;
  std::string variant;
  std::size_t vector_uplinks = 0;
  std::size_t fedavg_vector_uplinks = 0;
  double ratio = 0.0;
};

// Pairs each CB-DSL run with the fedavg run of the same seed. Runs without a
// counterpart are skipped with a warning on `warn`.
std::vector<CommunicationRow> report_communication(const std::vector<SummaryRow>& summary, std::ostream& warn);
void write_communication_csv(std::ostream& out, const std::vector<CommunicationRow>& rows);

// Shortest round-trip decimal; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double x);

}  // namespace cbdsl
