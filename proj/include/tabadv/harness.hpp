#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabadv/attacks.hpp"
#include "tabadv/data_pipeline.hpp"
#include "tabadv/metrics.hpp"
#include "tabadv/models.hpp"
#include "tabadv/qualitative.hpp"

namespace tabadv {

struct ExperimentConfig {
  std::vector<std::filesystem::path> datasets;  // schema files
  std::vector<ModelKind> models;
  std::vector<AttackConfig> attacks;
  std::uint64_t seed = 42;
  double effectiveness_threshold = 0.30;
  double train_fraction = 0.8;
  std::filesystem::path output_dir = "results";
  int parallelism = 1;
  TrainingConfig training;
  int case_reports = 3;        // case blocks per (dataset, model)
  bool dump_examples = true;   // per-cell CSV of decoded adversarial rows

  /// Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Relative dataset and output paths are resolved against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Digest of everything that affects results. Output location and worker
  /// count are left out, so they do not change any emitted file.
  std::string hash() const;
};

/// Restricts a run to matching cells. Parsed from "dataset=adult,model=MLP,attack=CW";
/// each key may repeat.
struct CellSelector {
  std::vector<std::string> datasets;
  std::vector<ModelKind> models;
  std::vector<AttackKind> attacks;

  static CellSelector parse(std::string_view text);
  bool matches(std::string_view dataset, ModelKind model) const;
  bool matches(std::string_view dataset, ModelKind model, AttackKind attack) const;
};

struct DatasetContext {
  FeatureSchema schema;
  RawTable table;
  EncodedDataset data;
  FeatureStats stats;
};

struct GroupStats {
  FiveNumber l2;
  FiveNumber deviation;
  FiveNumber sensitivity;
};

struct GroupComparison {
  GroupStats successful;
  GroupStats unsuccessful;
  bool complete = false;  // both groups non-empty
};

GroupComparison compare_groups(const std::vector<MetricRecord>& records);

struct ModelReport {
  std::string dataset;
  ModelKind model = ModelKind::LR;
  TrainingMetrics training;
  std::optional<std::string> error;
  double seconds = 0.0;
};

struct CellReport {
  std::string dataset;
  ModelKind model = ModelKind::LR;
  AttackConfig attack;
  std::size_t n_examples = 0;
  double success_rate = 0.0;
  MetricMeans all;
  MetricMeans successful;
  MetricMeans unsuccessful;
  GroupComparison groups;
  ViolationReport violations;
  PerturbationCounts counts;
  bool gated = false;
  std::optional<std::string> error;
  double seconds = 0.0;

  // In-memory only; not part of the serialized report.
  std::vector<AdversarialExample> examples;
  std::vector<MetricRecord> records;
};

struct BenchmarkResult {
  ExperimentConfig config;
  std::vector<std::shared_ptr<const DatasetContext>> datasets;
  std::vector<ModelReport> models;
  std::vector<CellReport> cells;

  std::size_t failures() const;
  const DatasetContext* dataset(std::string_view name) const;

  nlohmann::json to_json() const;
  static BenchmarkResult from_json(const nlohmann::json& j);
};

struct RunOptions {
  CellSelector only;
  bool run_attacks = true;
  /// Checkpoints are loaded from here when present and written otherwise.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const std::string&)> log;
};

/// Loads every dataset up front (schema and data errors propagate), then
/// trains and attacks each (dataset, model) unit on a pool of
/// cfg.parallelism workers. Failures inside a unit are recorded per cell.
BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const RunOptions& options = {});

std::shared_ptr<const DatasetContext> load_dataset_context(const std::filesystem::path& schema_path,
                                                           double train_fraction, std::uint64_t seed);

/// Writes tables, plot data, violation counts, case reports and a results
/// file into dir. Every CSV starts with "# config_hash=... seed=...".
void emit_reports(const BenchmarkResult& result, const std::filesystem::path& dir);

}  // namespace tabadv
