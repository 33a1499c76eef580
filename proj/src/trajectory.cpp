#include "ipath/trajectory.hpp"

#include <algorithm>
#include <numbers>

#include "ipath/errors.hpp"

namespace ipath {

std::vector<Trajectory> generate_walk_bank(int count, int length, Rng& rng, const WalkParams& walk) {
  if (count < 1) throw DomainError("walk bank needs at least one walk");
  if (length < 2) throw LengthError("walks need at least two positions");
  std::uniform_real_distribution<double> heading0(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> step(walk.step_mean, walk.step_sd);
  std::normal_distribution<double> turn(0.0, walk.heading_sd_deg * std::numbers::pi / 180.0);

  std::vector<Trajectory> bank(static_cast<std::size_t>(count));
  for (Trajectory& t : bank) {
    t.positions.reserve(static_cast<std::size_t>(length));
    Vec2 p{0.0, 0.0};
    double heading = heading0(rng);
    t.positions.push_back(p);
    for (int i = 1; i < length; ++i) {
      heading += turn(rng);
      const double len = std::clamp(step(rng), kMinStep, kMaxStep);
      p += Vec2{std::cos(heading), std::sin(heading)} * len;
      t.positions.push_back(p);
    }
  }
  return bank;
}

Trajectory crop_subtrajectory(const Trajectory& t, int m, Rng& rng) {
  if (m < 1) throw LengthError("crop length must be positive");
  if (t.size() < m) throw LengthError("trajectory shorter than the crop length");
  std::uniform_int_distribution<int> start(0, t.size() - m);
  const int s = start(rng);
  Trajectory out;
  out.positions.assign(t.positions.begin() + s, t.positions.begin() + s + m);
  return out;
}

Trajectory place_and_rotate(const Trajectory& t, Vec2 start, double angle) {
  Trajectory out;
  if (t.positions.empty()) return out;
  out.positions.reserve(t.positions.size());
  const Vec2 origin = t.positions.front();
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (const Vec2& p : t.positions) {
    const Vec2 r = p - origin;
    out.positions.push_back(start + Vec2{c * r.x - s * r.y, s * r.x + c * r.y});
  }
  return out;
}

bool collides(const FieldLayout& layout, const Trajectory& t) {
  const Bounds b = layout.bounds();
  for (const Vec2& p : t.positions) {
    if (!b.contains(p)) return true;
  }
  for (std::size_t i = 1; i < t.positions.size(); ++i) {
    const Segment step{t.positions[i - 1], t.positions[i]};
    for (const Segment& w : layout.walls) {
      if (segments_intersect(step, w)) return true;
    }
  }
  return false;
}

}  // namespace ipath
