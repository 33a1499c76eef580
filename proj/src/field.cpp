#include "ipath/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ipath/errors.hpp"

namespace ipath {
namespace {

constexpr double kDoorWidth = 1.2;

// Wall from a to b along one axis with a door gap starting `door_at` along it.
void add_wall_with_door(std::vector<Segment>& walls, Vec2 a, Vec2 b, double door_at) {
  const double len = distance(a, b);
  const Vec2 dir = (b - a) * (1.0 / len);
  const double g0 = std::clamp(door_at, 0.0, len - kDoorWidth);
  const double g1 = g0 + kDoorWidth;
  if (g0 > 0.0) walls.push_back({a, a + dir * g0});
  if (g1 < len) walls.push_back({a + dir * g1, b});
}

}  // namespace

void FieldLayout::validate() const {
  if (aps.empty()) throw DomainError("field layout needs at least one AP");
  const Bounds b = bounds();
  for (std::size_t i = 0; i < aps.size(); ++i) {
    if (!b.contains_strictly(aps[i])) throw DomainError("AP " + std::to_string(i) + " is not strictly inside the field");
  }
  for (std::size_t i = 0; i < walls.size(); ++i) {
    if (!b.contains(walls[i].a) || !b.contains(walls[i].b)) {
      throw DomainError("wall " + std::to_string(i) + " leaves the field bounds");
    }
  }
}

void PathLossParams::validate() const {
  if (!(ref_dist_m > 0.0)) throw DomainError("ref_dist_m must be positive");
  if (!(exponent > 0.0)) throw DomainError("path-loss exponent must be positive");
  if (!(floor_dbm < p0_dbm)) throw DomainError("floor_dbm must be below p0_dbm");
  if (!(shadow_sigma_db >= 0.0)) throw DomainError("shadow_sigma_db must be non-negative");
}

FieldLayout build_default_field(std::uint64_t seed) {
  Rng rng = make_rng({seed, 0xf1e1dULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  FieldLayout f;
  f.width_m = 20.0;
  f.height_m = 25.0;

  const double corridor_w = 3.0;
  const double cx0 = uniform(7.5, 9.5);
  const double cx1 = cx0 + corridor_w;

  // Rooms on each side of the corridor, 2 or 3 per side.
  auto room_cuts = [&](int rooms) {
    std::vector<double> cuts{0.0};
    for (int r = 1; r < rooms; ++r) cuts.push_back(f.height_m * r / rooms + uniform(-1.0, 1.0));
    cuts.push_back(f.height_m);
    return cuts;
  };
  const std::vector<double> left = room_cuts(2 + static_cast<int>(unit(rng) * 2.0));
  const std::vector<double> right = room_cuts(2 + static_cast<int>(unit(rng) * 2.0));

  // Corridor walls: one door into every room.
  auto corridor_wall = [&](double x, const std::vector<double>& cuts) {
    for (std::size_t r = 0; r + 1 < cuts.size(); ++r) {
      const double y0 = cuts[r];
      const double y1 = cuts[r + 1];
      const double door = uniform(0.5, y1 - y0 - kDoorWidth - 0.5);
      add_wall_with_door(f.walls, {x, y0}, {x, y1}, door);
    }
  };
  corridor_wall(cx0, left);
  corridor_wall(cx1, right);

  // Partitions between neighbouring rooms, each with its own door.
  for (std::size_t r = 1; r + 1 < left.size(); ++r) {
    add_wall_with_door(f.walls, {0.0, left[r]}, {cx0, left[r]}, uniform(0.5, cx0 - kDoorWidth - 0.5));
  }
  for (std::size_t r = 1; r + 1 < right.size(); ++r) {
    add_wall_with_door(f.walls, {cx1, right[r]}, {f.width_m, right[r]},
                       uniform(0.5, f.width_m - cx1 - kDoorWidth - 0.5));
  }

  // 4 x 5 lattice of APs, jittered, kept off the walls.
  const int cols = 4;
  const int rows = 5;
  const double cw = f.width_m / cols;
  const double ch = f.height_m / rows;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Vec2 p;
      do {
        p = {(c + 0.5) * cw + uniform(-0.3, 0.3) * cw, (r + 0.5) * ch + uniform(-0.3, 0.3) * ch};
      } while (!is_walkable(f, p, 0.3));
      f.aps.push_back(p);
    }
  }
  return f;
}

int walls_crossed(const FieldLayout& layout, Vec2 a, Vec2 b) {
  const Segment s{a, b};
  int count = 0;
  for (const Segment& w : layout.walls) count += segments_intersect(s, w) ? 1 : 0;
  return count;
}

bool is_walkable(const FieldLayout& layout, Vec2 p, double clearance) {
  if (!layout.bounds().contains(p)) return false;
  for (const Segment& w : layout.walls) {
    if (point_segment_distance(p, w) < clearance) return false;
  }
  return true;
}

double true_rssi(const FieldLayout& layout, const PathLossParams& params, int ap_index, Vec2 point) {
  if (ap_index < 0 || ap_index >= layout.ap_count()) throw DomainError("AP index out of range");
  if (!layout.bounds().contains(point)) throw DomainError("point outside the field");
  const Vec2 ap = layout.aps[static_cast<std::size_t>(ap_index)];
  const double d = std::max(distance(point, ap), params.ref_dist_m);
  const double loss = 10.0 * params.exponent * std::log10(d / params.ref_dist_m);
  const double value = params.p0_dbm - loss - params.wall_atten_db * walls_crossed(layout, point, ap);
  return std::max(params.floor_dbm, value);
}

double sample_observation(const FieldLayout& layout, const PathLossParams& params, int ap_index, Vec2 point,
                          Rng& rng) {
  const double mean = true_rssi(layout, params, ap_index, point);
  if (params.shadow_sigma_db == 0.0) return mean;
  std::normal_distribution<double> shadow(0.0, params.shadow_sigma_db);
  return std::max(params.floor_dbm, mean + shadow(rng));
}

std::vector<double> AnchorGrid::mean_targets() const {
  std::vector<double> out;
  out.reserve(observations.size() * static_cast<std::size_t>(ap_count()));
  for (const auto& per_anchor : observations) {
    for (const auto& samples : per_anchor) {
      double sum = 0.0;
      for (double s : samples) sum += s;
      out.push_back(sum / static_cast<double>(samples.size()));
    }
  }
  return out;
}

AnchorGrid survey_anchors(const FieldLayout& layout, const PathLossParams& params, int count, int samples_per_anchor,
                          std::uint64_t seed) {
  if (count < 1 || samples_per_anchor < 1) throw DomainError("anchor survey needs positive counts");
  Rng rng = make_rng({seed, 0xa7c4ULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double w = layout.width_m;
  const double h = layout.height_m;
  // Slightly oversampled grid so wall clearance rejections still leave enough cells.
  const double target = count * 1.15;
  const int cols = static_cast<int>(std::ceil(std::sqrt(target * w / h)));
  const int rows = static_cast<int>(std::ceil(target / cols));
  const double cw = w / cols;
  const double ch = h / rows;

  std::vector<Vec2> candidates;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec2 p{(c + 0.5 + 0.6 * (unit(rng) - 0.5)) * cw, (r + 0.5 + 0.6 * (unit(rng) - 0.5)) * ch};
      if (is_walkable(layout, p, 0.1)) candidates.push_back(p);
    }
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  if (static_cast<int>(candidates.size()) > count) candidates.resize(static_cast<std::size_t>(count));
  while (static_cast<int>(candidates.size()) < count) {
    const Vec2 p{unit(rng) * w, unit(rng) * h};
    if (is_walkable(layout, p, 0.1)) candidates.push_back(p);
  }

  AnchorGrid grid;
  grid.anchor_points = std::move(candidates);
  grid.samples_per_anchor = samples_per_anchor;
  grid.observations.resize(grid.anchor_points.size());
  for (std::size_t a = 0; a < grid.anchor_points.size(); ++a) {
    auto& per_ap = grid.observations[a];
    per_ap.resize(layout.aps.size());
    for (int ap = 0; ap < layout.ap_count(); ++ap) {
      auto& samples = per_ap[static_cast<std::size_t>(ap)];
      samples.reserve(static_cast<std::size_t>(samples_per_anchor));
      for (int s = 0; s < samples_per_anchor; ++s) {
        samples.push_back(sample_observation(layout, params, ap, grid.anchor_points[a], rng));
      }
    }
  }
  return grid;
}

}  // namespace ipath
