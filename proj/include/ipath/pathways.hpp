#pragma once

#include <optional>
#include <span>

#include "ipath/model.hpp"

namespace ipath {

/// The four pathway losses. Unset entries were not computed (or cannot be
/// formed because a component is ablated). FD/FDA are in normalized
/// fingerprint units, DD/FFS in meters.
struct PathwayLossValues {
  std::optional<double> fd;
  std::optional<double> dd;
  std::optional<double> fda;
  std::optional<double> ffs;
};

struct PathwaySet {
  bool fd = false;
  bool dd = false;
  bool fda = false;
  bool ffs = false;

  bool any() const { return fd || dd || fda || ffs; }
  bool operator==(const PathwaySet&) const = default;
};

inline constexpr PathwaySet kAllPathways{true, true, true, true};

struct AblationConfig {
  bool disable_d_encoder = false;  // drops DD and FDA
  bool disable_f_decoder = false;  // additionally drops FD; requires disable_d_encoder

  void validate() const;
  /// Pathways that can be formed with the remaining components.
  PathwaySet available() const;
  bool operator==(const AblationConfig&) const = default;
};

/// Pathways optimized in `stage` (1: FD, 2: FD + FDA, 3: FD + DD + FFS),
/// minus those the ablation removes. Throws DomainError for other stages.
PathwaySet stage_pathways(int stage, const AblationConfig& ablation);

/// Sum of the stage's pathway losses. Every required value must be present.
double stage_loss(int stage, const PathwayLossValues& losses, const AblationConfig& ablation);

/// Normalized fingerprints and displacements for a batch of traces.
struct TraceBatch {
  Mat f;  // (batch * len) x n, in [0, 1]
  Mat d;  // (batch * len) x 2, meters
  int batch = 0;
  int len = 0;
};

TraceBatch make_batch(const Dataset& ds, std::span<const std::int64_t> ids, const FingerprintNormalizer& norm);
TraceBatch make_batch(const FTrace& f, const DTrace& d, const FingerprintNormalizer& norm);

/// Forward pass of the selected pathways, batch-averaged, summed over steps
/// and features. With `backprop` the gradient of the sum of the selected
/// losses is accumulated into the model parameters (call zero_grad first).
PathwayLossValues run_pathways(Model& model, const TraceBatch& batch, PathwaySet which, bool backprop);

/// Sum_i |f_i - f~_i| with f~ = decode(encode(F)).
double loss_fd(const Model& model, const TraceBatch& batch);
/// Sum_{i>=2} |d_i - d~_i| through the displacement codec.
double loss_dd(const Model& model, const TraceBatch& batch);
/// Decode of l^_1 = l_1, l^_i = l_{i-1} + e_i against F.
double loss_fda(const Model& model, const TraceBatch& batch);
/// Decode of e^_i = l_i - l_{i-1} against d_i, i >= 2. Throws LengthError for m < 2.
double loss_ffs(const Model& model, const TraceBatch& batch);

}  // namespace ipath
