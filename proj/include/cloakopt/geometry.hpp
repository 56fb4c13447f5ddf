#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace cloak {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 &operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2 &operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  Vec2 &operator*=(double s) { x *= s; y *= s; return *this; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

struct Circle {
  Vec2 center;
  double radius = 0.0;
};

/// Signed area of a closed polygon (positive for counter-clockwise order).
double polygon_signed_area(std::span<const Vec2> poly);

/// Even-odd membership of `p` in the closed polygon.
bool point_in_polygon(std::span<const Vec2> poly, Vec2 p);

Vec2 closest_point_on_segment(Vec2 p, Vec2 a, Vec2 b);
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

/// True when the closed segments [a,b] and [c,d] share at least one point.
bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

/// A closed polyline. When `circle` is set the vertices sample that circle
/// and mesh refinement places new boundary points on the arc.
struct Contour {
  std::vector<Vec2> vertices;
  std::optional<Circle> circle;

  static Contour make_circle(Vec2 center, double radius, int segments);
  static Contour make_polygon(std::vector<Vec2> vertices);

  std::size_t size() const { return vertices.size(); }
  double signed_area() const { return polygon_signed_area(vertices); }
  double area() const { return std::abs(signed_area()); }
  double perimeter() const;
  Vec2 centroid() const;
  bool contains(Vec2 p) const { return point_in_polygon(vertices, p); }
  double distance_to(Vec2 p) const;
  /// No two non-adjacent edges touch and no adjacent edges overlap.
  bool is_simple() const;
  /// True when every vertex of `inner` is inside this contour and no edges cross.
  bool strictly_contains(const Contour &inner) const;
  /// Counter-clockwise copy.
  Contour oriented_ccw() const;
};

}  // namespace cloak
