#include "cloakopt/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>

#include "cloakopt/error.hpp"

namespace cloak {

namespace {

struct TriPoint {
  double l0, l1, l2, w;
};

// Six-point rule, exact for degree 4. Weights sum to one.
constexpr double kW1 = 0.223381589678011;
constexpr double kA1 = 0.445948490915965;
constexpr double kB1 = 0.108103018168070;
constexpr double kW2 = 0.109951743655322;
constexpr double kA2 = 0.091576213509771;
constexpr double kB2 = 0.816847572980459;
constexpr std::array<TriPoint, 6> kTriRule{{
    {kB1, kA1, kA1, kW1},
    {kA1, kB1, kA1, kW1},
    {kA1, kA1, kB1, kW1},
    {kB2, kA2, kA2, kW2},
    {kA2, kB2, kA2, kW2},
    {kA2, kA2, kB2, kW2},
}};

// Three-point Gauss on [0, 1], exact for degree 5.
constexpr double kG = 0.38729833462074170;  // sqrt(3/5) / 2
constexpr std::array<std::pair<double, double>, 3> kEdgeRule{{
    {0.5 - kG, 5.0 / 18.0},
    {0.5, 8.0 / 18.0},
    {0.5 + kG, 5.0 / 18.0},
}};

// Shape functions on an edge parametrized by s from a to b: (a, b, mid).
std::array<double, 3> edge_shape(double s) {
  return {(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)};
}

struct ElementWork {
  ElementMatrices em;
  std::array<cplx, 6> l{};
  std::array<cplx, 6> d{};
};

std::array<Vec2, 3> vertex_coords(const Mesh &mesh, std::size_t t) {
  const auto &tr = mesh.triangles[t];
  return {mesh.nodes[static_cast<std::size_t>(tr[0])], mesh.nodes[static_cast<std::size_t>(tr[1])],
          mesh.nodes[static_cast<std::size_t>(tr[2])]};
}

ElementWork element_work(const Mesh &mesh, std::size_t t, bool loads, const BackgroundMedium &medium,
                         const FrequencySpec &freq) {
  const auto [p0, p1, p2] = vertex_coords(mesh, t);
  ElementWork w;
  w.em = p2_element(p0, p1, p2);
  if (!loads) return w;

  const double area = 0.5 * cross(p1 - p0, p2 - p0);
  const Vec2 g0 = Vec2{p1.y - p2.y, p2.x - p1.x} / (2.0 * area);
  const Vec2 g1 = Vec2{p2.y - p0.y, p0.x - p2.x} / (2.0 * area);
  const Vec2 g2 = Vec2{p0.y - p1.y, p1.x - p0.x} / (2.0 * area);
  const double a0 = medium.a0();
  const double bw2 = medium.b0() * freq.omega * freq.omega;
  for (const TriPoint &q : kTriRule) {
    const Vec2 x = q.l0 * p0 + q.l1 * p1 + q.l2 * p2;
    const IncidentValue inc = incident_field(freq, x);
    const auto phi = p2_shape(q.l0, q.l1, q.l2);
    const std::array<Vec2, 6> grad{
        (4.0 * q.l0 - 1.0) * g0,
        (4.0 * q.l1 - 1.0) * g1,
        (4.0 * q.l2 - 1.0) * g2,
        4.0 * (q.l1 * g0 + q.l0 * g1),
        4.0 * (q.l2 * g1 + q.l1 * g2),
        4.0 * (q.l0 * g2 + q.l2 * g0),
    };
    const double wa = q.w * area;
    for (int i = 0; i < 6; ++i) {
      const cplx gdot = inc.dx * grad[static_cast<std::size_t>(i)].x + inc.dy * grad[static_cast<std::size_t>(i)].y;
      w.l[static_cast<std::size_t>(i)] -= wa * a0 * gdot;
      w.d[static_cast<std::size_t>(i)] += wa * bw2 * inc.p * phi[static_cast<std::size_t>(i)];
    }
  }
  return w;
}

void check_areas(const Mesh &mesh) {
  if (mesh.num_triangles() == 0) throw Error("assembly: empty mesh");
  const double mean = mesh.total_area() / static_cast<double>(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    if (!(mesh.triangle_area(t) >= 1e-14 * mean))
      throw Error("assembly: degenerate triangle " + std::to_string(t));
}

AssembledOperators scatter(const Mesh &mesh, const CellPartition &part, const BackgroundMedium &medium,
                           const FrequencySpec &freq, const std::vector<ElementWork> &work) {
  AssembledOperators ops;
  ops.freq = freq;
  ops.ndof = mesh.num_nodes();
  const auto n = static_cast<Eigen::Index>(ops.ndof);
  const double a0 = medium.a0();
  const double bw2 = medium.b0() * freq.omega * freq.omega;

  using T = Eigen::Triplet<double>;
  std::vector<T> ta, tb, tm;
  ta.reserve(mesh.num_triangles() * 36);
  tb.reserve(mesh.num_triangles() * 36);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto &tr = mesh.triangles[t];
    const auto &em = work[t].em;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const int gi = tr[static_cast<std::size_t>(i)];
        const int gj = tr[static_cast<std::size_t>(j)];
        ta.emplace_back(gi, gj, a0 * em.K(i, j));
        tb.emplace_back(gi, gj, -bw2 * em.M(i, j));
        if (mesh.region[t] == Region::Ambient) tm.emplace_back(gi, gj, em.M(i, j));
      }
  }
  ops.A0.resize(n, n);
  ops.A0.setFromTriplets(ta.begin(), ta.end());
  ops.B0.resize(n, n);
  ops.B0.setFromTriplets(tb.begin(), tb.end());
  ops.M_Da.resize(n, n);
  ops.M_Da.setFromTriplets(tm.begin(), tm.end());

  std::vector<Eigen::Triplet<cplx>> tc;
  ops.q = Eigen::VectorXcd::Zero(n);
  for (const BoundaryEdge &e : mesh.boundary) {
    const Vec2 pa = mesh.nodes[static_cast<std::size_t>(e.n1)];
    const Vec2 pb = mesh.nodes[static_cast<std::size_t>(e.n2)];
    const double len = distance(pa, pb);
    const std::array<int, 3> dofs{e.n1, e.n2, e.mid};
    if (e.tag == BoundaryTag::GammaE) {
      const double R = 0.5 * (norm(pa) + norm(pb));
      const cplx coef = a0 * cplx(1.0 / (2.0 * R), freq.k0);
      Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
      for (const auto &[s, w] : kEdgeRule) {
        const auto phi = edge_shape(s);
        for (int i = 0; i < 3; ++i)
          for (int j = i; j < 3; ++j) m(i, j) += w * len * phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(j)];
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          tc.emplace_back(dofs[static_cast<std::size_t>(i)], dofs[static_cast<std::size_t>(j)],
                          coef * (i <= j ? m(i, j) : m(j, i)));
    } else {
      // Normal pointing out of the owning triangle, i.e. out of the fluid domain.
      const auto &tr = mesh.triangles[static_cast<std::size_t>(e.triangle)];
      Vec2 apex;
      for (int k = 0; k < 3; ++k)
        if (tr[static_cast<std::size_t>(k)] != e.n1 && tr[static_cast<std::size_t>(k)] != e.n2)
          apex = mesh.nodes[static_cast<std::size_t>(tr[static_cast<std::size_t>(k)])];
      Vec2 nrm = Vec2{pb.y - pa.y, pa.x - pb.x} / len;
      if (dot(nrm, apex - pa) > 0.0) nrm = -nrm;
      for (const auto &[s, w] : kEdgeRule) {
        const Vec2 x = pa + s * (pb - pa);
        const IncidentValue inc = incident_field(freq, x);
        const cplx dn = inc.dx * nrm.x + inc.dy * nrm.y;
        const auto phi = edge_shape(s);
        for (int i = 0; i < 3; ++i)
          ops.q[dofs[static_cast<std::size_t>(i)]] += w * len * a0 * dn * phi[static_cast<std::size_t>(i)];
      }
    }
  }
  ops.C.resize(n, n);
  ops.C.setFromTriplets(tc.begin(), tc.end());

  ops.base = ops.A0.cast<cplx>() + ops.B0.cast<cplx>() + ops.C;
  ops.base.makeCompressed();

  // Per-cell blocks.
  std::vector<std::vector<int>> members(part.num_cells);
  for (std::size_t t = 0; t < part.cell_of_element.size(); ++t)
    if (part.cell_of_element[t] >= 0) members[static_cast<std::size_t>(part.cell_of_element[t])].push_back(static_cast<int>(t));
  ops.cells.resize(part.num_cells);
  for (std::size_t k = 0; k < part.num_cells; ++k) {
    CellBlock &cb = ops.cells[k];
    for (int t : members[k])
      for (int g : mesh.triangles[static_cast<std::size_t>(t)]) cb.dofs.push_back(g);
    std::sort(cb.dofs.begin(), cb.dofs.end());
    cb.dofs.erase(std::unique(cb.dofs.begin(), cb.dofs.end()), cb.dofs.end());
    const auto local = [&](int g) {
      return static_cast<int>(std::lower_bound(cb.dofs.begin(), cb.dofs.end(), g) - cb.dofs.begin());
    };
    cb.l = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(cb.dofs.size()));
    cb.d = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(cb.dofs.size()));
    std::map<std::pair<int, int>, std::pair<double, double>> entries;
    for (int t : members[k]) {
      const auto &tr = mesh.triangles[static_cast<std::size_t>(t)];
      const ElementWork &w = work[static_cast<std::size_t>(t)];
      std::array<int, 6> li{};
      for (int i = 0; i < 6; ++i) li[static_cast<std::size_t>(i)] = local(tr[static_cast<std::size_t>(i)]);
      for (int i = 0; i < 6; ++i) {
        cb.l[li[static_cast<std::size_t>(i)]] += w.l[static_cast<std::size_t>(i)];
        cb.d[li[static_cast<std::size_t>(i)]] += w.d[static_cast<std::size_t>(i)];
        for (int j = 0; j < 6; ++j) {
          auto &e = entries[{li[static_cast<std::size_t>(i)], li[static_cast<std::size_t>(j)]}];
          e.first += a0 * w.em.K(i, j);
          e.second -= bw2 * w.em.M(i, j);
        }
      }
    }
    for (const auto &[ij, ab] : entries) {
      cb.row.push_back(ij.first);
      cb.col.push_back(ij.second);
      cb.a.push_back(ab.first);
      cb.b.push_back(ab.second);
      const int gi = cb.dofs[static_cast<std::size_t>(ij.first)];
      const int gj = cb.dofs[static_cast<std::size_t>(ij.second)];
      const int *begin = ops.base.innerIndexPtr() + ops.base.outerIndexPtr()[gj];
      const int *end = ops.base.innerIndexPtr() + ops.base.outerIndexPtr()[gj + 1];
      const int *it = std::lower_bound(begin, end, gi);
      if (it == end || *it != gi) throw Error("assembly: cell entry outside the global sparsity");
      cb.pos.push_back(static_cast<int>(it - ops.base.innerIndexPtr()));
    }
  }
  return ops;
}

}  // namespace

void BackgroundMedium::validate() const {
  if (!(rho0 > 0.0) || !std::isfinite(rho0)) throw Error("medium: rho0 must be positive");
  if (!(kappa0 > 0.0) || !std::isfinite(kappa0)) throw Error("medium: kappa0 must be positive");
}

FrequencySpec FrequencySpec::from_omega(double omega, Vec2 direction, const BackgroundMedium &medium) {
  medium.validate();
  FrequencySpec f;
  f.omega = omega;
  const double n = norm(direction);
  if (!(n > 0.0)) throw Error("frequency: incidence direction must be nonzero");
  f.direction = direction / n;
  f.k0 = omega / medium.c0();
  f.validate();
  return f;
}

FrequencySpec FrequencySpec::from_wavelength(double wavelength, Vec2 direction, const BackgroundMedium &medium) {
  if (!(wavelength > 0.0)) throw Error("frequency: wavelength must be positive");
  return from_omega(2.0 * std::numbers::pi * medium.c0() / wavelength, direction, medium);
}

double FrequencySpec::wavelength() const { return 2.0 * std::numbers::pi / k0; }

void FrequencySpec::validate() const {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw Error("frequency: omega must be positive");
  if (std::abs(norm(direction) - 1.0) > 1e-12) throw Error("frequency: incidence direction must be a unit vector");
  if (!(k0 > 0.0)) throw Error("frequency: k0 must be positive");
}

IncidentValue incident_field(const FrequencySpec &freq, Vec2 x) {
  const double phase = -freq.k0 * dot(freq.direction, x);
  const cplx p{std::cos(phase), std::sin(phase)};
  const cplx g = cplx(0.0, -freq.k0) * p;
  return {p, g * freq.direction.x, g * freq.direction.y};
}

std::array<double, 6> p2_shape(double l0, double l1, double l2) {
  return {l0 * (2.0 * l0 - 1.0), l1 * (2.0 * l1 - 1.0), l2 * (2.0 * l2 - 1.0),
          4.0 * l0 * l1,         4.0 * l1 * l2,         4.0 * l2 * l0};
}

ElementMatrices p2_element(Vec2 p0, Vec2 p1, Vec2 p2) {
  const double area = 0.5 * cross(p1 - p0, p2 - p0);
  const Vec2 g0 = Vec2{p1.y - p2.y, p2.x - p1.x} / (2.0 * area);
  const Vec2 g1 = Vec2{p2.y - p0.y, p0.x - p2.x} / (2.0 * area);
  const Vec2 g2 = Vec2{p0.y - p1.y, p1.x - p0.x} / (2.0 * area);
  ElementMatrices em;
  em.K.setZero();
  em.M.setZero();
  for (const TriPoint &q : kTriRule) {
    const auto phi = p2_shape(q.l0, q.l1, q.l2);
    const std::array<Vec2, 6> grad{
        (4.0 * q.l0 - 1.0) * g0,
        (4.0 * q.l1 - 1.0) * g1,
        (4.0 * q.l2 - 1.0) * g2,
        4.0 * (q.l1 * g0 + q.l0 * g1),
        4.0 * (q.l2 * g1 + q.l1 * g2),
        4.0 * (q.l0 * g2 + q.l2 * g0),
    };
    const double wa = q.w * area;
    for (int i = 0; i < 6; ++i)
      for (int j = i; j < 6; ++j) {
        em.K(i, j) += wa * dot(grad[static_cast<std::size_t>(i)], grad[static_cast<std::size_t>(j)]);
        em.M(i, j) += wa * phi[static_cast<std::size_t>(i)] * phi[static_cast<std::size_t>(j)];
      }
  }
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < i; ++j) {
      em.K(i, j) = em.K(j, i);
      em.M(i, j) = em.M(j, i);
    }
  return em;
}

AssembledOperators assemble_constants(const Mesh &mesh, const CellPartition &part, const BackgroundMedium &medium,
                                      const FrequencySpec &freq) {
  medium.validate();
  freq.validate();
  check_areas(mesh);
  const auto nt = static_cast<std::ptrdiff_t>(mesh.num_triangles());
  std::vector<ElementWork> work(mesh.num_triangles());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < nt; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    work[ut] = element_work(mesh, ut, part.cell_of_element[ut] >= 0, medium, freq);
  }
  return scatter(mesh, part, medium, freq, work);
}

AssembledOperators assemble_constants_serial(const Mesh &mesh, const CellPartition &part,
                                             const BackgroundMedium &medium, const FrequencySpec &freq) {
  medium.validate();
  freq.validate();
  check_areas(mesh);
  std::vector<ElementWork> work(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    work[t] = element_work(mesh, t, part.cell_of_element[t] >= 0, medium, freq);
  return scatter(mesh, part, medium, freq, work);
}

Eigen::VectorXcd AssembledOperators::apply_Ak(std::size_t k, const Eigen::VectorXcd &x) const {
  const CellBlock &cb = cells[k];
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(cb.dofs.size()));
  for (std::size_t e = 0; e < cb.a.size(); ++e)
    y[cb.row[e]] += cb.a[e] * x[cb.dofs[static_cast<std::size_t>(cb.col[e])]];
  return y;
}

Eigen::VectorXcd AssembledOperators::apply_Bk(std::size_t k, const Eigen::VectorXcd &x) const {
  const CellBlock &cb = cells[k];
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(cb.dofs.size()));
  for (std::size_t e = 0; e < cb.b.size(); ++e)
    y[cb.row[e]] += cb.b[e] * x[cb.dofs[static_cast<std::size_t>(cb.col[e])]];
  return y;
}

namespace {
RealSparse global_block(const CellBlock &cb, const std::vector<double> &vals, std::size_t n) {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t e = 0; e < vals.size(); ++e)
    t.emplace_back(cb.dofs[static_cast<std::size_t>(cb.row[e])], cb.dofs[static_cast<std::size_t>(cb.col[e])], vals[e]);
  RealSparse m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(t.begin(), t.end());
  return m;
}
}  // namespace

RealSparse AssembledOperators::global_Ak(std::size_t k) const { return global_block(cells[k], cells[k].a, ndof); }
RealSparse AssembledOperators::global_Bk(std::size_t k) const { return global_block(cells[k], cells[k].b, ndof); }

ComposedSystem compose_system(const AssembledOperators &ops, const ControlState &ctrl) {
  if (ctrl.v.size() != static_cast<Eigen::Index>(ops.cells.size()) ||
      ctrl.u.size() != static_cast<Eigen::Index>(ops.cells.size()))
    throw Error("compose_system: control length does not match the number of cells");
  ComposedSystem s{ops.base, -ops.q};
  cplx *values = s.A.valuePtr();
  for (std::size_t k = 0; k < ops.cells.size(); ++k) {
    const double sv = std::expm1(-ctrl.v[static_cast<Eigen::Index>(k)]);
    const double su = std::expm1(-ctrl.u[static_cast<Eigen::Index>(k)]);
    if (sv == 0.0 && su == 0.0) continue;
    const CellBlock &cb = ops.cells[k];
    for (std::size_t e = 0; e < cb.pos.size(); ++e) values[cb.pos[e]] += sv * cb.a[e] + su * cb.b[e];
    for (std::size_t i = 0; i < cb.dofs.size(); ++i)
      s.f[cb.dofs[i]] += sv * cb.l[static_cast<Eigen::Index>(i)] + su * cb.d[static_cast<Eigen::Index>(i)];
  }
  return s;
}

void write_matrix(std::ostream &os, const ComplexSparse &A) {
  os.precision(17);
  for (Eigen::Index c = 0; c < A.outerSize(); ++c)
    for (ComplexSparse::InnerIterator it(A, c); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value().real() << ' ' << it.value().imag() << '\n';
}

}  // namespace cloak
