#pragma once

#include <cmath>
#include <vector>

namespace ipath {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

struct Segment {
  Vec2 a;
  Vec2 b;
  bool operator==(const Segment&) const = default;
};

/// Closed-segment intersection test with exact orientation predicates.
/// Touching at an endpoint and collinear overlap both count as intersecting.
bool segments_intersect(const Segment& s, const Segment& t);

/// Shortest distance from point `p` to segment `s`.
double point_segment_distance(Vec2 p, const Segment& s);

/// Axis-aligned rectangle [0, width] x [0, height].
struct Bounds {
  double width = 0.0;
  double height = 0.0;

  bool contains(Vec2 p) const { return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height; }
  bool contains_strictly(Vec2 p) const { return p.x > 0.0 && p.x < width && p.y > 0.0 && p.y < height; }
};

}  // namespace ipath
