#pragma once

#include <cmath>

namespace caps::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Pose {
  Vec2 position;
  double heading = 0.0;  // rad, counter-clockwise from +x
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct LineSegment {
  Vec2 a;
  Vec2 b;
};

// Proper or touching intersection of closed segments p0p1 and q0q1.
inline bool segments_intersect(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
  const auto orient = [](Vec2 a, Vec2 b, Vec2 c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
  };
  const auto on_segment = [](Vec2 a, Vec2 b, Vec2 c) {
    return std::fmin(a.x, b.x) <= c.x && c.x <= std::fmax(a.x, b.x) &&
           std::fmin(a.y, b.y) <= c.y && c.y <= std::fmax(a.y, b.y);
  };
  const int o1 = orient(p0, p1, q0);
  const int o2 = orient(p0, p1, q1);
  const int o3 = orient(q0, q1, p0);
  const int o4 = orient(q0, q1, p1);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p0, p1, q0)) return true;
  if (o2 == 0 && on_segment(p0, p1, q1)) return true;
  if (o3 == 0 && on_segment(q0, q1, p0)) return true;
  if (o4 == 0 && on_segment(q0, q1, p1)) return true;
  return false;
}

// Parameter t in [0,1] of the closest point on segment ab to p.
inline double closest_param(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return 0.0;
  const double t = dot(p - a, ab) / len2;
  return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
}

}  // namespace caps::env
