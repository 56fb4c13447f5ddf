#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cloakopt/geometry.hpp"

namespace cloak {

/// Obstacle, cloak region and outer radiation circle. The outer circle is
/// centered at the origin.
struct DomainSpec {
  Contour obstacle;
  Contour cloak_outer;
  double outer_radius = 0.0;
  double cell_edge = 0.0;

  /// Throws cloak::Error naming the first violated requirement.
  void validate() const;
};

enum class Region : int { Ambient = 0, Cloak = 1 };
enum class BoundaryTag : int { GammaI = 0, GammaE = 1 };

struct BoundaryEdge {
  int n1 = -1;
  int n2 = -1;
  int mid = -1;
  int triangle = -1;
  BoundaryTag tag = BoundaryTag::GammaI;
};

/// Quadratic triangle mesh. Each triangle lists v0 v1 v2 m01 m12 m20, vertices
/// counter-clockwise. Vertex nodes come first in `nodes`, midpoints after.
struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 6>> triangles;
  std::vector<Region> region;
  std::vector<BoundaryEdge> boundary;
  std::size_t num_vertices = 0;

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_triangles() const { return triangles.size(); }
  double triangle_area(std::size_t t) const;
  Vec2 triangle_centroid(std::size_t t) const;
  double total_area() const;
  double region_area(Region r) const;
  /// Longest vertex-to-vertex edge.
  double max_edge_length() const;

  /// Throws cloak::Error if any structural invariant fails.
  void validate(double outer_radius = 0.0) const;
};

struct MeshOptions {
  double h_cloak = 0.0;
  double h_ambient = 0.0;
  /// Maximum length of segments on circular boundaries (defaults to the
  /// local element size when zero).
  double h_arc = 0.0;
  double quality = 1.25;
};

/// A regular flat-top hexagon on the lattice anchored at the obstacle centroid.
struct Hexagon {
  Vec2 center;
  double edge = 0.0;
  int i = 0;
  int j = 0;

  std::array<Vec2, 6> vertices() const;
  double area() const;
  bool contains(Vec2 p) const;
};

/// Hexagons of edge `spec.cell_edge` lying entirely in the cloak annulus.
/// Throws cloak::Error when none fits.
std::vector<Hexagon> generate_hex_partition(const DomainSpec &spec);

/// True iff the two lattice hexagons share an edge.
bool lattice_adjacent(const Hexagon &a, const Hexagon &b);

Mesh build_mesh(const DomainSpec &spec, const std::vector<Hexagon> &hexes, const MeshOptions &opts);
Mesh build_mesh(const DomainSpec &spec, const std::vector<Hexagon> &hexes, double target_h);

struct CellPartition {
  std::size_t num_cells = 0;
  std::vector<int> cell_of_element;  // -1 when the element is in no cell
  std::vector<double> areas;
  std::vector<std::vector<int>> adjacency;
  std::vector<Vec2> centers;

  bool connected() const;
  void validate(const Mesh &mesh) const;
};

CellPartition assign_cells(const Mesh &mesh, const std::vector<Hexagon> &hexes);

void write_mesh(std::ostream &os, const Mesh &mesh);
Mesh read_mesh(std::istream &is);
void write_partition(std::ostream &os, const CellPartition &part);
CellPartition read_partition(std::istream &is);

/// Bucket grid over triangles for locating points.
class PointLocator {
 public:
  explicit PointLocator(const Mesh &mesh);
  /// Triangle containing p and its barycentric coordinates, if any.
  std::optional<std::pair<int, std::array<double, 3>>> locate(Vec2 p) const;

 private:
  const Mesh *mesh_;
  Vec2 origin_;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace cloak
