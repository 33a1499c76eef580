#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipath/config.hpp"

namespace ipath {

/// Field, fitted radio map and walk bank shared by every dataset of a run.
struct Environment {
  FieldBundle bundle;
  GprRadioMap map;
  std::vector<Trajectory> bank;
  std::string field_hash;
};

Environment make_environment(const RunConfig& config);

DatasetOptions dataset_options(const RunConfig& config);

/// Builds and splits the dataset. With dataset.test_lambda set, the test
/// traces are re-noised at that level.
Dataset synthesize(const RunConfig& config, const Environment& env, Exec exec = Exec::parallel);

/// Throws IntegrityError when the dataset does not belong to the config.
void check_dataset(const RunConfig& config, const Dataset& ds, const std::string& hash);

struct EvalReport {
  MetricsReport metrics;
  FewShotReport fewshot;
};

EvalReport evaluate(const RunConfig& config, const Model& model, const Dataset& ds, Exec exec = Exec::parallel);

// Text renderings. Floats use the shortest round-trip decimal so repeated
// runs produce byte-identical files.
std::string format_double(double v);
std::string metrics_csv(const MetricsReport& report);
std::string training_log_csv(const std::vector<EpochRecord>& history);
std::string projection_csv(const LatentProjection& projection);
nlohmann::ordered_json fewshot_json(const FewShotReport& report);

enum class SweepKind { noise, size_length, ablation };

std::string to_string(SweepKind kind);
SweepKind parse_sweep_kind(const std::string& s);

struct SweepCell {
  std::string name;  // directory name, also used by --cells filters
  RunConfig config;
  nlohmann::ordered_json labels;  // row keys for the aggregate table
};

/// Cells of a sweep in table order. Ablation cells share data seeds and size.
std::vector<SweepCell> sweep_cells(const RunConfig& base, SweepKind kind);

/// Keeps cells whose name contains any of the comma-separated tokens. An
/// empty filter keeps everything.
std::vector<SweepCell> filter_cells(std::vector<SweepCell> cells, const std::string& filter);

/// Aggregate CSV: one row per cell, metrics left as "missing" when the cell
/// has no report.
std::string sweep_csv(const std::vector<SweepCell>& cells, const std::vector<const MetricsReport*>& reports);

/// Record of a finished run: hashes of config, dataset and every artifact.
struct RunManifest {
  std::string config_hash;
  std::string dataset_hash;
  std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, hash
  std::string created;
  std::string code_version;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  void add(const std::filesystem::path& dir, const std::string& relative);
  void save(const std::filesystem::path& dir) const;
  static RunManifest load(const std::filesystem::path& dir);
  /// True when every artifact exists and still hashes to the recorded value.
  bool verify(const std::filesystem::path& dir) const;
};

inline constexpr const char* kManifestFile = "run_manifest.json";

std::string code_version();

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ipath
