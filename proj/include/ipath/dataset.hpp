#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ipath/parallel.hpp"
#include "ipath/radiomap.hpp"
#include "ipath/trajectory.hpp"

namespace ipath {

/// Stepwise displacements; the first entry is always the zero placeholder.
struct DTrace {
  std::vector<Vec2> steps;
  bool operator==(const DTrace&) const = default;
};

/// m x n RSSI matrix in dBm, row-major.
struct FTrace {
  int length = 0;
  int aps = 0;
  std::vector<double> rssi;

  double at(int i, int ap) const { return rssi[static_cast<std::size_t>(i) * aps + ap]; }
  bool operator==(const FTrace&) const = default;
};

struct NoiseConfig {
  double sigma_f = 0.05;
  double sigma_r = 0.2;
  double sigma_theta = 0.15;
  double lambda = 1.0;

  void validate() const;
  bool operator==(const NoiseConfig&) const = default;
};

struct PairedTrace {
  Trajectory trajectory;  // noiseless positions
  FTrace ftrace;
  DTrace dtrace;
  std::int64_t trace_id = 0;
  std::uint64_t seed = 0;

  int length() const { return trajectory.size(); }
  bool operator==(const PairedTrace&) const = default;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;

  int version = kFormatVersion;
  int m = 9;
  int n = 20;
  std::int64_t count = 0;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double train_ratio = 0.8;
  NoiseConfig noise;
  std::string field_hash;  // hash of the field bundle JSON

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PairedTrace> traces;
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> test;

  bool operator==(const Dataset&) const = default;
};

/// Positions to displacements (d1 = 0) and GPR fingerprints, without noise.
PairedTrace derive_traces(const Trajectory& t, const GprRadioMap& map);

/// f -> f * (1 + N(0, sigma)) on raw dBm values.
FTrace inject_rssi_noise(const FTrace& f, double sigma, Rng& rng);

inline double perturb_rssi(double f, double eps) { return f * (1.0 + eps); }

/// One step of the polar perturbation with given draws.
Vec2 perturb_step(Vec2 d, double eps_r, double eps_theta);

/// Polar perturbation r(1 + N(0, sigma_r)), theta + N(0, sigma_theta) for
/// steps i >= 2. Zero-length steps and the placeholder stay at zero.
DTrace inject_displacement_noise(const DTrace& d, double sigma_r, double sigma_theta, Rng& rng);

struct DatasetOptions {
  std::int64_t size = 40000;
  int m = 9;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  // Rejection probe: if fewer than min_accept_rate of the first probe_attempts
  // placements succeed the configuration is rejected as too cluttered.
  int probe_attempts = 20000;
  double min_accept_rate = 0.001;
  int max_attempts_per_trace = 100000;
};

/// Per-trace seed so any trace is reproducible in isolation.
std::uint64_t trace_seed(std::uint64_t dataset_seed, std::int64_t trace_id);

/// One accepted, noise-injected trace. Deterministic in (seed, trace_id).
PairedTrace synthesize_trace(const FieldLayout& layout, const GprRadioMap& map, const std::vector<Trajectory>& bank,
                             const DatasetOptions& options, std::int64_t trace_id);

/// Re-derives the clean traces of `trace` from its trajectory and injects
/// noise from the trace's own noise stream. Used for per-split noise levels.
void renoise_trace(PairedTrace& trace, const GprRadioMap& map, const NoiseConfig& noise);

/// Builds `options.size` traces. The split is left empty.
Dataset build_dataset(const FieldLayout& layout, const GprRadioMap& map, const std::vector<Trajectory>& bank,
                      const DatasetOptions& options, Exec exec = Exec::parallel);

/// Disjoint random train/test partition of sizes floor(ratio N) / remainder.
Dataset split_dataset(Dataset ds, double ratio, std::uint64_t seed);

std::string serialize_manifest(const Dataset& ds);
std::string serialize_record(const PairedTrace& trace);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Content hash over the serialized manifest and trace records.
std::string dataset_hash(const std::filesystem::path& dir);
std::string dataset_hash(const Dataset& ds);

}  // namespace ipath
