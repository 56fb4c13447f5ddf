#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cloakopt/geometry.hpp"

namespace cloak::detail {

/// A closed chain of constraint segments. Loops tagged with a circle get new
/// split points projected back onto that circle.
struct PslgLoop {
  std::vector<Vec2> points;
  std::optional<Circle> circle;
};

struct RefineOptions {
  /// Circumradius-to-shortest-edge bound (Ruppert quality).
  double max_radius_edge_ratio = 1.25;
  /// Region id for a point, or -1 for regions that are not meshed.
  std::function<int(Vec2)> classify;
  /// Maximum edge length allowed in a region.
  std::function<double(int region)> max_edge;
  /// Triangles whose shortest edge is below this fraction of max_edge are
  /// only refined for size, never for shape.
  double min_edge_fraction = 0.02;
  std::size_t max_vertices = 4'000'000;
};

struct RefinedSegment {
  int a = -1;
  int b = -1;
  int loop = -1;
};

struct RefinedTriangulation {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<int> region;
  std::vector<RefinedSegment> segments;       // constraint pieces between kept vertices
};

/// Conforming Delaunay refinement of a planar straight-line graph made of
/// closed loops. Throws cloak::Error on failure (vertex budget, lost segment).
RefinedTriangulation refine_pslg(std::span<const PslgLoop> loops, const RefineOptions &opts);

}  // namespace cloak::detail
