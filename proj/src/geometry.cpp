#include "cloakopt/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

#include "cloakopt/error.hpp"

namespace cloak {

double polygon_signed_area(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  double a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool point_in_polygon(std::span<const Vec2> poly, Vec2 p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

Vec2 closest_point_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 d = b - a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return a;
  const double t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
  return a + t * d;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  return distance(p, closest_point_on_segment(p, a, b));
}

namespace {

int orientation_sign(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

}  // namespace

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const int o1 = orientation_sign(a, b, c);
  const int o2 = orientation_sign(a, b, d);
  const int o3 = orientation_sign(c, d, a);
  const int o4 = orientation_sign(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

Contour Contour::make_circle(Vec2 center, double radius, int segments) {
  if (radius <= 0.0) throw Error("circle radius must be positive");
  if (segments < 3) throw Error("circle needs at least 3 segments");
  Contour c;
  c.vertices.reserve(static_cast<std::size_t>(segments));
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    c.vertices.push_back({center.x + radius * std::cos(t), center.y + radius * std::sin(t)});
  }
  c.circle = Circle{center, radius};
  return c;
}

Contour Contour::make_polygon(std::vector<Vec2> vertices) {
  if (vertices.size() >= 2 && vertices.front() == vertices.back()) vertices.pop_back();
  if (vertices.size() < 3) throw Error("polygon needs at least 3 vertices");
  Contour c;
  c.vertices = std::move(vertices);
  return c;
}

double Contour::perimeter() const {
  double s = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    s += distance(vertices[i], vertices[(i + 1) % vertices.size()]);
  return s;
}

Vec2 Contour::centroid() const {
  const std::size_t n = vertices.size();
  double a = 0.0;
  Vec2 c;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = vertices[i];
    const Vec2 q = vertices[(i + 1) % n];
    const double w = p.x * q.y - q.x * p.y;
    a += w;
    c += w * (p + q);
  }
  if (a == 0.0) return vertices.front();
  return c / (3.0 * a);
}

double Contour::distance_to(Vec2 p) const {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vertices.size(); ++i)
    d = std::min(d, point_segment_distance(p, vertices[i], vertices[(i + 1) % vertices.size()]));
  return d;
}

bool Contour::is_simple() const {
  const std::size_t n = vertices.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = vertices[i];
    const Vec2 b = vertices[(i + 1) % n];
    if (a == b) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      const Vec2 c = vertices[j];
      const Vec2 d = vertices[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex.
        if (orientation_sign(a, b, j == i + 1 ? d : c) == 0) {
          const Vec2 other = j == i + 1 ? d : c;
          const Vec2 shared = j == i + 1 ? b : a;
          if (dot(other - shared, (j == i + 1 ? a : b) - shared) > 0.0) return false;
        }
        continue;
      }
      if (segments_intersect(a, b, c, d)) return false;
    }
  }
  return true;
}

bool Contour::strictly_contains(const Contour &inner) const {
  for (const Vec2 &p : inner.vertices)
    if (!contains(p)) return false;
  const std::size_t n = vertices.size();
  const std::size_t m = inner.vertices.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (segments_intersect(vertices[i], vertices[(i + 1) % n], inner.vertices[j],
                             inner.vertices[(j + 1) % m]))
        return false;
  return true;
}

Contour Contour::oriented_ccw() const {
  Contour c = *this;
  if (c.signed_area() < 0.0) std::reverse(c.vertices.begin(), c.vertices.end());
  return c;
}

}  // namespace cloak
