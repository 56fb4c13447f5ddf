#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "cloakopt/error.hpp"
#include "cloakopt/mesh.hpp"

namespace cloak {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

Vec2 lattice_center(Vec2 anchor, double l, int i, int j) {
  return {anchor.x + 1.5 * l * i, anchor.y + kSqrt3 * l * (j + 0.5 * i)};
}

bool inside_outer(const Contour &outer, const std::array<Vec2, 6> &hv) {
  if (outer.circle) {
    for (const Vec2 &p : hv)
      if (distance(p, outer.circle->center) > outer.circle->radius) return false;
    return true;
  }
  for (const Vec2 &p : hv)
    if (!outer.contains(p)) return false;
  const std::size_t n = outer.size();
  for (std::size_t e = 0; e < 6; ++e)
    for (std::size_t k = 0; k < n; ++k)
      if (segments_intersect(hv[e], hv[(e + 1) % 6], outer.vertices[k], outer.vertices[(k + 1) % n]))
        return false;
  return true;
}

bool outside_obstacle(const Contour &obstacle, const Hexagon &hex, const std::array<Vec2, 6> &hv) {
  if (obstacle.circle) {
    const Vec2 c = obstacle.circle->center;
    const double r = obstacle.circle->radius;
    if (hex.contains(c)) return false;
    for (std::size_t e = 0; e < 6; ++e)
      if (point_segment_distance(c, hv[e], hv[(e + 1) % 6]) < r) return false;
    return true;
  }
  for (const Vec2 &p : hv)
    if (obstacle.contains(p)) return false;
  for (const Vec2 &p : obstacle.vertices)
    if (hex.contains(p)) return false;
  const std::size_t n = obstacle.size();
  for (std::size_t e = 0; e < 6; ++e)
    for (std::size_t k = 0; k < n; ++k)
      if (segments_intersect(hv[e], hv[(e + 1) % 6], obstacle.vertices[k], obstacle.vertices[(k + 1) % n]))
        return false;
  return true;
}

}  // namespace

std::array<Vec2, 6> Hexagon::vertices() const {
  std::array<Vec2, 6> v;
  for (int m = 0; m < 6; ++m) {
    const double t = m * std::numbers::pi / 3.0;
    v[static_cast<std::size_t>(m)] = {center.x + edge * std::cos(t), center.y + edge * std::sin(t)};
  }
  return v;
}

double Hexagon::area() const { return 1.5 * kSqrt3 * edge * edge; }

bool Hexagon::contains(Vec2 p) const {
  const double dx = std::abs(p.x - center.x);
  const double dy = std::abs(p.y - center.y);
  const double slack = 1e-12 * edge;
  return dy <= 0.5 * kSqrt3 * edge + slack && kSqrt3 * dx + dy <= kSqrt3 * edge + slack;
}

bool lattice_adjacent(const Hexagon &a, const Hexagon &b) {
  const int di = b.i - a.i;
  const int dj = b.j - a.j;
  return (di == 0 && std::abs(dj) == 1) || (dj == 0 && std::abs(di) == 1) || (di == 1 && dj == -1) ||
         (di == -1 && dj == 1);
}

std::vector<Hexagon> generate_hex_partition(const DomainSpec &spec) {
  spec.validate();
  const double l = spec.cell_edge;
  const Vec2 anchor = spec.obstacle.circle ? spec.obstacle.circle->center : spec.obstacle.centroid();
  double reach = 0.0;
  for (const Vec2 &p : spec.cloak_outer.vertices) reach = std::max(reach, distance(p, anchor));
  if (spec.cloak_outer.circle)
    reach = std::max(reach, distance(spec.cloak_outer.circle->center, anchor) + spec.cloak_outer.circle->radius);
  const int ni = static_cast<int>(std::ceil(reach / (1.5 * l))) + 1;
  const int nj = static_cast<int>(std::ceil(reach / (kSqrt3 * l))) + ni + 1;

  std::vector<Hexagon> out;
  for (int i = -ni; i <= ni; ++i) {
    for (int j = -nj; j <= nj; ++j) {
      Hexagon h{lattice_center(anchor, l, i, j), l, i, j};
      if (distance(h.center, anchor) > reach + l) continue;
      const auto hv = h.vertices();
      if (inside_outer(spec.cloak_outer, hv) && outside_obstacle(spec.obstacle, h, hv)) out.push_back(h);
    }
  }
  if (out.empty()) {
    double clearance = std::numeric_limits<double>::infinity();
    for (const Vec2 &p : spec.obstacle.vertices) clearance = std::min(clearance, spec.cloak_outer.distance_to(p));
    std::ostringstream msg;
    msg << "empty hexagon partition: clearance between obstacle and cloak outer boundary is " << clearance
        << " m but a hexagon of edge " << l << " m needs at least " << kSqrt3 * l << " m";
    throw Error(msg.str());
  }
  return out;
}

CellPartition assign_cells(const Mesh &mesh, const std::vector<Hexagon> &hexes) {
  if (hexes.empty()) throw Error("assign_cells: no hexagons");
  const double l = hexes.front().edge;
  const Vec2 anchor = hexes.front().center - Vec2{1.5 * l * hexes.front().i,
                                                   kSqrt3 * l * (hexes.front().j + 0.5 * hexes.front().i)};
  std::map<std::pair<int, int>, int> index;
  for (std::size_t k = 0; k < hexes.size(); ++k) index[{hexes[k].i, hexes[k].j}] = static_cast<int>(k);

  CellPartition part;
  part.num_cells = hexes.size();
  part.cell_of_element.assign(mesh.num_triangles(), -1);
  part.areas.assign(hexes.size(), 0.0);
  part.centers.reserve(hexes.size());
  for (const Hexagon &h : hexes) part.centers.push_back(h.center);

  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    if (mesh.region[t] != Region::Cloak) continue;
    const Vec2 c = mesh.triangle_centroid(t) - anchor;
    const int i0 = static_cast<int>(std::lround(c.x / (1.5 * l)));
    const int j0 = static_cast<int>(std::lround(c.y / (kSqrt3 * l) - 0.5 * i0));
    int best = -1;
    for (int i = i0 - 1; i <= i0 + 1; ++i)
      for (int j = j0 - 1; j <= j0 + 1; ++j) {
        const auto it = index.find({i, j});
        if (it == index.end()) continue;
        if ((best < 0 || it->second < best) && hexes[static_cast<std::size_t>(it->second)].contains(c + anchor))
          best = it->second;
      }
    if (best >= 0) {
      part.cell_of_element[t] = best;
      part.areas[static_cast<std::size_t>(best)] += mesh.triangle_area(t);
    }
  }
  for (std::size_t k = 0; k < hexes.size(); ++k)
    if (part.areas[k] == 0.0) {
      std::ostringstream msg;
      msg << "hexagonal cell " << k << " contains no mesh element; refine the cloak mesh (h <= l/2)";
      throw Error(msg.str());
    }

  part.adjacency.assign(hexes.size(), {});
  for (std::size_t k = 0; k < hexes.size(); ++k) {
    static constexpr std::array<std::pair<int, int>, 6> kNb{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, -1}, {-1, 1}}};
    for (const auto &[di, dj] : kNb) {
      const auto it = index.find({hexes[k].i + di, hexes[k].j + dj});
      if (it != index.end()) part.adjacency[k].push_back(it->second);
    }
    std::sort(part.adjacency[k].begin(), part.adjacency[k].end());
  }
  return part;
}

bool CellPartition::connected() const {
  if (num_cells == 0) return false;
  std::vector<char> seen(num_cells, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (int n : adjacency[static_cast<std::size_t>(k)])
      if (!seen[static_cast<std::size_t>(n)]) {
        seen[static_cast<std::size_t>(n)] = 1;
        ++count;
        stack.push_back(n);
      }
  }
  return count == num_cells;
}

void CellPartition::validate(const Mesh &mesh) const {
  if (cell_of_element.size() != mesh.num_triangles()) throw Error("partition: element count mismatch");
  if (areas.size() != num_cells || adjacency.size() != num_cells) throw Error("partition: cell count mismatch");
  std::vector<double> sums(num_cells, 0.0);
  for (std::size_t t = 0; t < cell_of_element.size(); ++t) {
    const int c = cell_of_element[t];
    if (c < 0) continue;
    if (static_cast<std::size_t>(c) >= num_cells) throw Error("partition: cell index out of range");
    if (mesh.region[t] != Region::Cloak) throw Error("partition: cell element outside the cloak region");
    sums[static_cast<std::size_t>(c)] += mesh.triangle_area(t);
  }
  for (std::size_t k = 0; k < num_cells; ++k) {
    if (std::abs(sums[k] - areas[k]) > 1e-10 * std::max(areas[k], 1e-300))
      throw Error("partition: cell area differs from its element sum");
    for (int n : adjacency[k]) {
      if (n < 0 || static_cast<std::size_t>(n) >= num_cells || static_cast<std::size_t>(n) == k)
        throw Error("partition: bad neighbor index");
      const auto &back = adjacency[static_cast<std::size_t>(n)];
      if (std::find(back.begin(), back.end(), static_cast<int>(k)) == back.end())
        throw Error("partition: adjacency is not symmetric");
    }
  }
  if (!connected()) throw Error("partition: adjacency graph is not connected");
}

void write_partition(std::ostream &os, const CellPartition &part) {
  os.precision(17);
  os << "cells " << part.num_cells << " elements " << part.cell_of_element.size() << '\n';
  for (std::size_t k = 0; k < part.num_cells; ++k) {
    const Vec2 c = k < part.centers.size() ? part.centers[k] : Vec2{};
    os << c.x << ' ' << c.y << ' ' << part.areas[k] << ' ' << part.adjacency[k].size();
    for (int n : part.adjacency[k]) os << ' ' << n;
    os << '\n';
  }
  for (int c : part.cell_of_element) os << c << '\n';
}

CellPartition read_partition(std::istream &is) {
  std::string w1, w2;
  std::size_t nc = 0, nt = 0;
  if (!(is >> w1 >> nc >> w2 >> nt) || w1 != "cells" || w2 != "elements")
    throw Error("partition file: bad header (expected 'cells N elements T')");
  CellPartition part;
  part.num_cells = nc;
  part.areas.resize(nc);
  part.centers.resize(nc);
  part.adjacency.resize(nc);
  for (std::size_t k = 0; k < nc; ++k) {
    std::size_t nn = 0;
    if (!(is >> part.centers[k].x >> part.centers[k].y >> part.areas[k] >> nn))
      throw Error("partition file: truncated cell record " + std::to_string(k));
    part.adjacency[k].resize(nn);
    for (int &n : part.adjacency[k])
      if (!(is >> n)) throw Error("partition file: truncated adjacency of cell " + std::to_string(k));
  }
  part.cell_of_element.resize(nt);
  for (int &c : part.cell_of_element)
    if (!(is >> c)) throw Error("partition file: truncated element list");
  return part;
}

}  // namespace cloak
