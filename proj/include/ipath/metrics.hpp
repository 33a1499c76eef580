#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipath/inference.hpp"

namespace ipath {

inline constexpr double kAll = std::numeric_limits<double>::infinity();
inline constexpr std::array<double, 3> kMetricBuckets{5.0, 10.0, kAll};

struct PairSample {
  std::int64_t a = 0;  // trace ids
  std::int64_t b = 0;
  Vec2 target;         // p_B^m - p_A^m from noiseless positions
  double length = 0.0;
};

/// N distinct unordered test-trace pairs, each in a random orientation.
/// Throws DomainError when N exceeds the number of distinct pairs.
std::vector<PairSample> sample_pairs(const Dataset& ds, std::int64_t n, std::uint64_t seed);

/// Predictions and latent endpoint distances for every pair.
struct PairPredictions {
  std::vector<Vec2> delta_hat;
  std::vector<double> latent_distance;
};

PairPredictions predict_pairs(const Model& model, const Dataset& ds, std::span<const PairSample> pairs,
                              Exec exec = Exec::parallel);

struct MetricValue {
  double value = 0.0;
  std::int64_t count = 0;  // N' for DE, couples for LCDR
};

/// Mean |delta_hat - delta| over pairs with |delta| <= k. Throws DomainError
/// when no pair survives the filter.
MetricValue displacement_error(std::span<const PairSample> pairs, std::span<const Vec2> delta_hat, double k);

/// Per-pair Euclidean errors, the data-parallel part of DE.
std::vector<double> pair_errors(std::span<const PairSample> pairs, std::span<const Vec2> delta_hat,
                                Exec exec = Exec::parallel);

/// Latent code-distance ratio: pairs are binned by |delta| (width
/// `bin_width`), randomly matched into disjoint couples inside each bin, and
/// min(r_AB, r_CD) / max(r_AB, r_CD) is averaged over couples whose first pair
/// has |delta| <= k. Zero-length pairs are ignored.
MetricValue lcdr(std::span<const PairSample> pairs, std::span<const double> latent_distance, double k,
                 double bin_width, std::uint64_t seed);

struct MetricsReport {
  std::array<MetricValue, 3> de;    // k = 5, 10, all
  std::array<MetricValue, 3> lcdr;  // k = 5, 10, all
  std::int64_t pairs = 0;
  nlohmann::ordered_json config;

  nlohmann::ordered_json to_json() const;
};

struct MetricsOptions {
  std::int64_t pairs = 10000;
  double lcdr_bin_width = 0.5;
  std::uint64_t seed = 0;
};

MetricsReport evaluate_metrics(const Model& model, const Dataset& ds, const MetricsOptions& options,
                               Exec exec = Exec::parallel);

struct LatentProjection {
  std::vector<std::int64_t> trace_ids;
  std::vector<Vec2> projected;  // top-2 principal components of endpoint codes
  std::vector<Vec2> truth;      // true endpoint positions
  double explained_variance = 0.0;
  double total_variance = 0.0;
};

/// PCA of endpoint latent codes. Throws DomainError for fewer than 3 traces.
LatentProjection latent_projection(const Model& model, const Dataset& ds, std::span<const std::int64_t> ids,
                                   Exec exec = Exec::parallel);
LatentProjection project_codes(const Mat& codes);

/// RMS residual after the best similarity transform (rotation or reflection,
/// uniform scale, translation) of `from` onto `to`.
double procrustes_rms(std::span<const Vec2> from, std::span<const Vec2> to);

struct FewShotReport {
  int anchors = 0;
  std::int64_t queries = 0;
  double mean_error = 0.0;
};

/// Anchors are the first K of a seeded shuffle of the test split; queries are
/// the next `queries` test traces, so different K share queries and nest anchors.
FewShotReport evaluate_fewshot(const Model& model, const Dataset& ds, int anchors, std::int64_t queries,
                               std::uint64_t seed, int max_anchors = 64, Exec exec = Exec::parallel);

}  // namespace ipath
