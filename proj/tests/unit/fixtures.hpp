#pragma once

#include <array>
#include <complex>
#include <numbers>
#include <vector>

#include "cloakopt/mesh.hpp"
#include "cloakopt/ocp.hpp"

namespace fixtures {

using namespace cloak;

inline DomainSpec circle_domain(double r, double r_cloak, double R, double l, int segments = 128) {
  DomainSpec s;
  s.obstacle = Contour::make_circle({0.0, 0.0}, r, segments);
  s.cloak_outer = Contour::make_circle({0.0, 0.0}, r_cloak, segments);
  s.outer_radius = R;
  s.cell_edge = l;
  return s;
}

/// Small obstacle problem with a handful of cells, cheap enough for
/// finite-difference checks.
struct SmallProblem {
  DomainSpec spec;
  std::vector<Hexagon> hexes;
  Mesh mesh;
  CellPartition part;
  BackgroundMedium medium;
};

inline SmallProblem small_problem(double l, double h_cloak, double h_amb) {
  SmallProblem p;
  p.spec = circle_domain(0.3, 0.62, 1.1, l, 48);
  p.hexes = generate_hex_partition(p.spec);
  p.mesh = build_mesh(p.spec, p.hexes, MeshOptions{h_cloak, h_amb, 0.0, 1.25});
  p.part = assign_cells(p.mesh, p.hexes);
  return p;
}

inline ControlState random_controls(std::size_t n, unsigned seed, double amp) {
  ControlState c = ControlState::zeros(n);
  unsigned s = seed;
  const auto next = [&s] {
    s = s * 1664525u + 1013904223u;
    return static_cast<double>(s >> 8) / static_cast<double>(1u << 24);
  };
  for (std::size_t k = 0; k < n; ++k) {
    c.v[static_cast<Eigen::Index>(k)] = amp * (2.0 * next() - 1.0);
    c.u[static_cast<Eigen::Index>(k)] = amp * (2.0 * next() - 1.0);
  }
  return c;
}

/// Barycentric points and weights of the 7-point degree-5 triangle rule.
inline std::array<std::array<double, 4>, 7> degree5_rule() {
  const double s15 = std::sqrt(15.0);
  const double a1 = (9 - 2 * s15) / 21, b1 = (6 + s15) / 21, w1 = (155 + s15) / 1200;
  const double a2 = (9 + 2 * s15) / 21, b2 = (6 - s15) / 21, w2 = (155 - s15) / 1200;
  return {{{1.0 / 3, 1.0 / 3, 1.0 / 3, 9.0 / 40},
           {a1, b1, b1, w1}, {b1, a1, b1, w1}, {b1, b1, a1, w1},
           {a2, b2, b2, w2}, {b2, a2, b2, w2}, {b2, b2, a2, w2}}};
}

/// Integral of f over triangle (a, b, c) split into n*n congruent pieces.
template <class F>
std::complex<double> integrate_subdivided(Vec2 a, Vec2 b, Vec2 c, int n, F f) {
  const auto rule = degree5_rule();
  const double area = 0.5 * std::abs(cross(b - a, c - a)) / (n * n);
  const Vec2 e1 = (b - a) / n, e2 = (c - a) / n;
  std::complex<double> sum = 0;
  const auto piece = [&](Vec2 p0, Vec2 p1, Vec2 p2) {
    for (const auto &q : rule) sum += q[3] * area * f(q[0] * p0 + q[1] * p1 + q[2] * p2);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; i + j < n; ++j) {
      const Vec2 o = a + static_cast<double>(i) * e1 + static_cast<double>(j) * e2;
      piece(o, o + e1, o + e2);
      if (i + j < n - 1) piece(o + e1, o + e1 + e2, o + e2);
    }
  return sum;
}

}  // namespace fixtures
