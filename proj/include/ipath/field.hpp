#pragma once

#include <cstdint>
#include <vector>

#include "ipath/geometry.hpp"
#include "ipath/random.hpp"

namespace ipath {

struct FieldLayout {
  double width_m = 20.0;
  double height_m = 25.0;
  std::vector<Segment> walls;
  std::vector<Vec2> aps;

  Bounds bounds() const { return {width_m, height_m}; }
  int ap_count() const { return static_cast<int>(aps.size()); }

  /// Throws DomainError when an AP is not strictly inside, a wall endpoint
  /// is outside, or there are no APs.
  void validate() const;
  bool operator==(const FieldLayout&) const = default;
};

/// Ground-truth log-distance signal model with per-wall attenuation.
struct PathLossParams {
  double p0_dbm = -40.0;
  double ref_dist_m = 1.0;
  double exponent = 2.2;
  double wall_atten_db = 5.0;
  double shadow_sigma_db = 2.0;
  double floor_dbm = -95.0;

  void validate() const;
  bool operator==(const PathLossParams&) const = default;
};

/// 20 x 25 m floor with a vertical corridor, rooms on both sides and 20 APs on
/// a jittered 4 x 5 lattice. Partition and door positions vary with `seed`.
FieldLayout build_default_field(std::uint64_t seed);

/// Number of walls the segment a-b touches or crosses.
int walls_crossed(const FieldLayout& layout, Vec2 a, Vec2 b);

/// Inside bounds and at least `clearance` away from every wall.
bool is_walkable(const FieldLayout& layout, Vec2 p, double clearance = 0.05);

double true_rssi(const FieldLayout& layout, const PathLossParams& params, int ap_index, Vec2 point);

double sample_observation(const FieldLayout& layout, const PathLossParams& params, int ap_index, Vec2 point,
                          Rng& rng);

/// Labeled survey locations with repeated noisy observations.
struct AnchorGrid {
  std::vector<Vec2> anchor_points;
  int samples_per_anchor = 50;
  // observations[anchor][ap] holds samples_per_anchor RSSI values.
  std::vector<std::vector<std::vector<double>>> observations;

  /// anchors x aps matrix of per-anchor sample means, row-major.
  std::vector<double> mean_targets() const;
  int ap_count() const { return observations.empty() ? 0 : static_cast<int>(observations.front().size()); }
};

/// Places `count` anchors on a jittered grid over walkable space and draws
/// `samples_per_anchor` observations per AP at each.
AnchorGrid survey_anchors(const FieldLayout& layout, const PathLossParams& params, int count,
                          int samples_per_anchor, std::uint64_t seed);

}  // namespace ipath
