#pragma once

#include <vector>

#include "ipath/field.hpp"
#include "ipath/geometry.hpp"
#include "ipath/random.hpp"

namespace ipath {

inline constexpr double kMinStep = 0.2;
inline constexpr double kMaxStep = 1.5;

struct Trajectory {
  std::vector<Vec2> positions;

  int size() const { return static_cast<int>(positions.size()); }
  bool operator==(const Trajectory&) const = default;
};

struct WalkParams {
  double step_mean = 0.7;
  double step_sd = 0.15;
  double heading_sd_deg = 25.0;
};

/// Random walks with clamped normal step lengths and normal heading changes.
std::vector<Trajectory> generate_walk_bank(int count, int length, Rng& rng, const WalkParams& walk = {});

/// Contiguous window of `m` positions with a uniformly drawn start. Throws
/// LengthError when the trajectory is shorter than `m`.
Trajectory crop_subtrajectory(const Trajectory& t, int m, Rng& rng);

/// Moves the first position to `start` and rotates the rest about it.
Trajectory place_and_rotate(const Trajectory& t, Vec2 start, double angle);

/// True when any step touches a wall or any position leaves the field.
bool collides(const FieldLayout& layout, const Trajectory& t);

}  // namespace ipath
