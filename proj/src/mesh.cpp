#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "cloakopt/error.hpp"
#include "cloakopt/mesh.hpp"
#include "delaunay.hpp"

namespace cloak {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

const char *region_name(Region r) { return r == Region::Cloak ? "Dc" : "Da"; }
const char *tag_name(BoundaryTag t) { return t == BoundaryTag::GammaE ? "GammaE" : "GammaI"; }

// Resample a circular contour so no segment exceeds h.
detail::PslgLoop loop_from(const Contour &c, double h) {
  detail::PslgLoop loop;
  if (c.circle) {
    const int n = std::max<int>(static_cast<int>(c.size()),
                                static_cast<int>(std::ceil(2.0 * std::numbers::pi * c.circle->radius / h)));
    loop.points = Contour::make_circle(c.circle->center, c.circle->radius, n).vertices;
    loop.circle = c.circle;
  } else {
    loop.points = c.vertices;
  }
  return loop;
}

// Fill midpoint nodes, boundary edges and owning triangles from vertex-only
// connectivity. Triangles arrive with midpoint slots set to -1.
void attach_midpoints(Mesh &m) {
  std::unordered_map<std::uint64_t, int> mid;
  mid.reserve(m.triangles.size() * 2);
  for (auto &t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[static_cast<std::size_t>(e)];
      const int b = t[static_cast<std::size_t>((e + 1) % 3)];
      auto [it, fresh] = mid.emplace(edge_key(a, b), static_cast<int>(m.nodes.size()));
      if (fresh) m.nodes.push_back(0.5 * (m.nodes[static_cast<std::size_t>(a)] + m.nodes[static_cast<std::size_t>(b)]));
      t[static_cast<std::size_t>(3 + e)] = it->second;
    }
}

void link_boundary(Mesh &m) {
  std::unordered_map<std::uint64_t, std::pair<int, int>> owner;  // edge -> (triangle, count)
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
    for (int e = 0; e < 3; ++e) {
      const auto &tr = m.triangles[t];
      auto &o = owner[edge_key(tr[static_cast<std::size_t>(e)], tr[static_cast<std::size_t>((e + 1) % 3)])];
      o.first = static_cast<int>(t);
      ++o.second;
    }
  for (BoundaryEdge &b : m.boundary) {
    const auto it = owner.find(edge_key(b.n1, b.n2));
    if (it == owner.end()) throw Error("mesh: boundary edge is not a triangle edge");
    if (it->second.second != 1) throw Error("mesh: boundary edge is shared by two triangles");
    b.triangle = it->second.first;
    const auto &tr = m.triangles[static_cast<std::size_t>(b.triangle)];
    for (int e = 0; e < 3; ++e) {
      const int a = tr[static_cast<std::size_t>(e)];
      const int c = tr[static_cast<std::size_t>((e + 1) % 3)];
      if (edge_key(a, c) == edge_key(b.n1, b.n2)) b.mid = tr[static_cast<std::size_t>(3 + e)];
    }
  }
}

}  // namespace

void DomainSpec::validate() const {
  if (!(cell_edge > 0.0)) throw Error("domain: cell_edge must be positive");
  if (!(outer_radius > 0.0)) throw Error("domain: outer_radius must be positive");
  if (!obstacle.is_simple()) throw Error("domain: obstacle contour is not simple");
  if (!cloak_outer.is_simple()) throw Error("domain: cloak outer boundary is not simple");
  if (!cloak_outer.strictly_contains(obstacle))
    throw Error("domain: obstacle contour must lie strictly inside the cloak outer boundary");
  for (const Vec2 &p : cloak_outer.vertices)
    if (!(norm(p) < outer_radius)) throw Error("domain: cloak outer boundary must lie inside the outer circle");
}

double Mesh::triangle_area(std::size_t t) const {
  const auto &tr = triangles[t];
  return 0.5 * cross(nodes[static_cast<std::size_t>(tr[1])] - nodes[static_cast<std::size_t>(tr[0])],
                     nodes[static_cast<std::size_t>(tr[2])] - nodes[static_cast<std::size_t>(tr[0])]);
}

Vec2 Mesh::triangle_centroid(std::size_t t) const {
  const auto &tr = triangles[t];
  return (nodes[static_cast<std::size_t>(tr[0])] + nodes[static_cast<std::size_t>(tr[1])] +
          nodes[static_cast<std::size_t>(tr[2])]) / 3.0;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
  return a;
}

double Mesh::region_area(Region r) const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t)
    if (region[t] == r) a += triangle_area(t);
  return a;
}

double Mesh::max_edge_length() const {
  double h = 0.0;
  for (const auto &tr : triangles)
    for (int e = 0; e < 3; ++e)
      h = std::max(h, distance(nodes[static_cast<std::size_t>(tr[static_cast<std::size_t>(e)])],
                               nodes[static_cast<std::size_t>(tr[static_cast<std::size_t>((e + 1) % 3)])]));
  return h;
}

void Mesh::validate(double outer_radius) const {
  if (region.size() != triangles.size()) throw Error("mesh: region tags do not match triangles");
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int n : triangles[t])
      if (n < 0 || static_cast<std::size_t>(n) >= nodes.size()) throw Error("mesh: node index out of range");
    if (!(triangle_area(t) > 0.0)) throw Error("mesh: triangle " + std::to_string(t) + " has nonpositive area");
    for (int e = 0; e < 3; ++e) {
      const Vec2 a = nodes[static_cast<std::size_t>(triangles[t][static_cast<std::size_t>(e)])];
      const Vec2 b = nodes[static_cast<std::size_t>(triangles[t][static_cast<std::size_t>((e + 1) % 3)])];
      const Vec2 m = nodes[static_cast<std::size_t>(triangles[t][static_cast<std::size_t>(3 + e)])];
      if (distance(m, 0.5 * (a + b)) > 1e-12 * (distance(a, b) + norm(m)))
        throw Error("mesh: midpoint node off its edge in triangle " + std::to_string(t));
    }
  }
  std::unordered_map<std::uint64_t, int> count;
  for (const auto &tr : triangles)
    for (int e = 0; e < 3; ++e)
      ++count[edge_key(tr[static_cast<std::size_t>(e)], tr[static_cast<std::size_t>((e + 1) % 3)])];
  for (const BoundaryEdge &b : boundary) {
    const auto it = count.find(edge_key(b.n1, b.n2));
    if (it == count.end() || it->second != 1) throw Error("mesh: boundary edge not owned by exactly one triangle");
    if (b.tag == BoundaryTag::GammaE && outer_radius > 0.0)
      for (int n : {b.n1, b.n2})
        if (std::abs(norm(nodes[static_cast<std::size_t>(n)]) - outer_radius) > 1e-9 * outer_radius)
          throw Error("mesh: GammaE node off the outer circle");
  }
}

Mesh build_mesh(const DomainSpec &spec, const std::vector<Hexagon> &hexes, double target_h) {
  (void)hexes;
  return build_mesh(spec, hexes, MeshOptions{target_h, target_h, 0.0, 1.25});
}

Mesh build_mesh(const DomainSpec &spec, const std::vector<Hexagon> &hexes, const MeshOptions &opts) {
  spec.validate();
  if (!(opts.h_cloak > 0.0) || !(opts.h_ambient > 0.0)) throw Error("mesh: element sizes must be positive");
  if (!hexes.empty() && opts.h_cloak > 0.5 * spec.cell_edge + 1e-15)
    throw Error("mesh: h_cloak must not exceed half the hexagon edge");
  const double arc_c = opts.h_arc > 0.0 ? std::min(opts.h_arc, opts.h_cloak) : opts.h_cloak;
  const double arc_a = opts.h_arc > 0.0 ? std::min(opts.h_arc, opts.h_ambient) : opts.h_ambient;

  std::vector<detail::PslgLoop> loops;
  loops.push_back(loop_from(spec.obstacle, arc_c));
  loops.push_back(loop_from(spec.cloak_outer, arc_c));
  const Contour outer = Contour::make_circle({0.0, 0.0}, spec.outer_radius, 64);
  loops.push_back(loop_from(outer, arc_a));

  const Contour &obstacle = spec.obstacle;
  const Contour &cloak = spec.cloak_outer;
  const double R = spec.outer_radius;
  detail::RefineOptions ro;
  ro.max_radius_edge_ratio = opts.quality;
  ro.classify = [&](Vec2 p) {
    if (norm(p) >= R) return -1;
    if (obstacle.contains(p)) return -1;
    return cloak.contains(p) ? 1 : 0;
  };
  const double hc = opts.h_cloak, ha = opts.h_ambient;
  ro.max_edge = [hc, ha](int r) { return r == 1 ? hc : ha; };

  const detail::RefinedTriangulation tri = detail::refine_pslg(loops, ro);

  Mesh m;
  m.nodes = tri.vertices;
  m.num_vertices = tri.vertices.size();
  m.triangles.reserve(tri.triangles.size());
  for (std::size_t t = 0; t < tri.triangles.size(); ++t) {
    const auto &v = tri.triangles[t];
    m.triangles.push_back({v[0], v[1], v[2], -1, -1, -1});
    m.region.push_back(tri.region[t] == 1 ? Region::Cloak : Region::Ambient);
  }
  attach_midpoints(m);
  for (const detail::RefinedSegment &s : tri.segments) {
    if (s.loop == 1) continue;
    m.boundary.push_back({s.a, s.b, -1, -1, s.loop == 0 ? BoundaryTag::GammaI : BoundaryTag::GammaE});
  }
  std::sort(m.boundary.begin(), m.boundary.end(), [](const BoundaryEdge &a, const BoundaryEdge &b) {
    return std::tie(a.tag, a.n1, a.n2) < std::tie(b.tag, b.n1, b.n2);
  });
  link_boundary(m);
  m.validate(R);
  return m;
}

void write_mesh(std::ostream &os, const Mesh &m) {
  os.precision(17);
  os << "nodes " << m.nodes.size() << " triangles " << m.triangles.size() << " edges " << m.boundary.size() << '\n';
  for (const Vec2 &p : m.nodes) os << p.x << ' ' << p.y << '\n';
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    for (int n : m.triangles[t]) os << n << ' ';
    os << region_name(m.region[t]) << '\n';
  }
  for (const BoundaryEdge &b : m.boundary) os << b.n1 << ' ' << b.n2 << ' ' << tag_name(b.tag) << '\n';
}

Mesh read_mesh(std::istream &is) {
  std::string w1, w2, w3;
  std::size_t nn = 0, nt = 0, ne = 0;
  if (!(is >> w1 >> nn >> w2 >> nt >> w3 >> ne) || w1 != "nodes" || w2 != "triangles" || w3 != "edges")
    throw Error("mesh file: bad header (expected 'nodes N triangles T edges E')");
  Mesh m;
  m.nodes.resize(nn);
  for (std::size_t i = 0; i < nn; ++i)
    if (!(is >> m.nodes[i].x >> m.nodes[i].y)) throw Error("mesh file: truncated node " + std::to_string(i));
  m.triangles.resize(nt);
  m.region.resize(nt);
  int max_vertex = -1;
  for (std::size_t t = 0; t < nt; ++t) {
    std::string tag;
    for (int &n : m.triangles[t])
      if (!(is >> n)) throw Error("mesh file: truncated triangle " + std::to_string(t));
    if (!(is >> tag) || (tag != "Da" && tag != "Dc"))
      throw Error("mesh file: triangle " + std::to_string(t) + " needs region tag Da or Dc");
    m.region[t] = tag == "Dc" ? Region::Cloak : Region::Ambient;
    for (int e = 0; e < 3; ++e) max_vertex = std::max(max_vertex, m.triangles[t][static_cast<std::size_t>(e)]);
  }
  m.num_vertices = static_cast<std::size_t>(max_vertex + 1);
  m.boundary.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    std::string tag;
    if (!(is >> m.boundary[e].n1 >> m.boundary[e].n2 >> tag) || (tag != "GammaI" && tag != "GammaE"))
      throw Error("mesh file: bad boundary edge " + std::to_string(e));
    m.boundary[e].tag = tag == "GammaE" ? BoundaryTag::GammaE : BoundaryTag::GammaI;
  }
  for (std::size_t t = 0; t < nt; ++t)
    for (int k = 3; k < 6; ++k)
      if (m.triangles[t][static_cast<std::size_t>(k)] < static_cast<int>(m.num_vertices))
        throw Error("mesh file: midpoint nodes must follow all vertex nodes (triangle " + std::to_string(t) + ")");
  link_boundary(m);
  m.validate();
  return m;
}

PointLocator::PointLocator(const Mesh &mesh) : mesh_(&mesh) {
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (std::size_t i = 0; i < mesh.num_vertices; ++i) {
    lo = {std::min(lo.x, mesh.nodes[i].x), std::min(lo.y, mesh.nodes[i].y)};
    hi = {std::max(hi.x, mesh.nodes[i].x), std::max(hi.y, mesh.nodes[i].y)};
  }
  const double span = std::max(hi.x - lo.x, hi.y - lo.y);
  const double n = std::max(1.0, std::sqrt(static_cast<double>(mesh.num_triangles())));
  cell_ = span / n * 1.0000001 + 1e-300;
  origin_ = lo;
  nx_ = static_cast<int>((hi.x - lo.x) / cell_) + 1;
  ny_ = static_cast<int>((hi.y - lo.y) / cell_) + 1;
  buckets_.assign(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), {});
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    Vec2 a{1e300, 1e300}, b{-1e300, -1e300};
    for (int k = 0; k < 3; ++k) {
      const Vec2 p = mesh.nodes[static_cast<std::size_t>(mesh.triangles[t][static_cast<std::size_t>(k)])];
      a = {std::min(a.x, p.x), std::min(a.y, p.y)};
      b = {std::max(b.x, p.x), std::max(b.y, p.y)};
    }
    const int x0 = std::clamp(static_cast<int>((a.x - origin_.x) / cell_), 0, nx_ - 1);
    const int x1 = std::clamp(static_cast<int>((b.x - origin_.x) / cell_), 0, nx_ - 1);
    const int y0 = std::clamp(static_cast<int>((a.y - origin_.y) / cell_), 0, ny_ - 1);
    const int y1 = std::clamp(static_cast<int>((b.y - origin_.y) / cell_), 0, ny_ - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) buckets_[static_cast<std::size_t>(y * nx_ + x)].push_back(static_cast<int>(t));
  }
}

std::optional<std::pair<int, std::array<double, 3>>> PointLocator::locate(Vec2 p) const {
  const int x = static_cast<int>(std::floor((p.x - origin_.x) / cell_));
  const int y = static_cast<int>(std::floor((p.y - origin_.y) / cell_));
  if (x < 0 || y < 0 || x >= nx_ || y >= ny_) return std::nullopt;
  for (int t : buckets_[static_cast<std::size_t>(y * nx_ + x)]) {
    const auto &tr = mesh_->triangles[static_cast<std::size_t>(t)];
    const Vec2 a = mesh_->nodes[static_cast<std::size_t>(tr[0])];
    const Vec2 b = mesh_->nodes[static_cast<std::size_t>(tr[1])];
    const Vec2 c = mesh_->nodes[static_cast<std::size_t>(tr[2])];
    const double area2 = cross(b - a, c - a);
    const double l0 = cross(b - p, c - p) / area2;
    const double l1 = cross(c - p, a - p) / area2;
    const double l2 = 1.0 - l0 - l1;
    const double tol = -1e-12;
    if (l0 >= tol && l1 >= tol && l2 >= tol) return std::make_pair(t, std::array<double, 3>{l0, l1, l2});
  }
  return std::nullopt;
}

}  // namespace cloak
