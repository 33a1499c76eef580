#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipath/dataset.hpp"
#include "ipath/metrics.hpp"
#include "ipath/model.hpp"
#include "ipath/pathways.hpp"
#include "ipath/train.hpp"

namespace ipath {

struct FieldConfig {
  int anchors = 337;
  int samples_per_anchor = 50;
  PathLossParams path_loss;
  double kernel_signal_var = 25.0;
  double kernel_length_scale = 3.0;
};

struct WalkConfig {
  int count = 1000;
  int length = 64;
};

struct DataConfig {
  std::int64_t size = 40000;
  int m = 9;
  double train_ratio = 0.8;
  NoiseConfig noise;
  std::optional<double> test_lambda;  // per-split noise override for the test traces
  std::string expect_hash;           // refuse datasets with another hash when set
};

struct MetricConfig {
  std::int64_t pairs = 10000;
  double lcdr_bin_width = 0.5;
  int fewshot_anchors = 32;
  std::int64_t fewshot_queries = 2000;
};

struct Seeds {
  std::uint64_t field = 0;
  std::uint64_t data = 1;
  std::uint64_t model = 2;
  std::uint64_t eval = 3;
};

struct SweepConfig {
  std::vector<double> lambdas{0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  std::vector<int> m_values{5, 7, 9, 11};
  std::vector<std::int64_t> sizes{4000, 12000, 40000};
};

/// Everything an experiment depends on. Unknown keys are rejected; missing
/// keys keep their defaults.
struct RunConfig {
  FieldConfig field;
  WalkConfig walks;
  DataConfig dataset;
  ModelConfig model;
  StageSchedule schedule;
  AblationConfig ablation;
  MetricConfig metrics;
  Seeds seeds;
  SweepConfig sweep;
  std::string output_dir = "runs/default";

  /// Throws ConfigError naming the offending key.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  void validate() const;

  /// Hash of the full resolved config.
  std::string hash() const;
  /// Hash of the parts that determine the dataset (field, walks, data, seeds).
  std::string data_hash() const;

  /// Applies `name=value` seed overrides (field, data, model, eval).
  void apply_seed_override(const std::string& assignment);
};

/// Resolved model config for this run (AP count and trace length filled in).
ModelConfig resolved_model(const RunConfig& config);
MetricsOptions metric_options(const RunConfig& config);

}  // namespace ipath
