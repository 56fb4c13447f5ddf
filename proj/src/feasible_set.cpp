#include "cloakopt/feasible_set.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include "cloakopt/error.hpp"

namespace cloak {

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint, false>;  // counter-clockwise
using BgMulti = bg::model::multi_polygon<BgPolygon>;

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

double lame_lambda(const PhaseData &ph) {
  const double E = ph.young_solid, nu = ph.poisson_solid;
  return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
}

double lame_mu(const PhaseData &ph) { return ph.young_solid / (2.0 * (1.0 + ph.poisson_solid)); }

// Plane-strain bulk stiffness of a solid ring with an empty core, seen as an
// inclusion under uniform external pressure.
double ring_bulk(double r_out, double r_in, const PhaseData &ph) {
  const double lm = lame_lambda(ph) + lame_mu(ph);
  const double beta2 = (r_in / r_out) * (r_in / r_out);
  return lm * (1.0 - beta2) / (1.0 + lm * beta2 / lame_mu(ph));
}

std::vector<Vec2> star_polygon(double p, double P, int n) {
  std::vector<Vec2> v;
  for (int i = 0; i < 2 * n; ++i) {
    const double a = i * std::numbers::pi / n;
    const double r = i % 2 == 0 ? P : p;
    v.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return v;
}

// Inward miter offset of a counter-clockwise polygon.
std::vector<Vec2> miter_offset(const std::vector<Vec2> &poly, double d) {
  const std::size_t n = poly.size();
  std::vector<Vec2> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[(i + n - 1) % n], b = poly[i], c = poly[(i + 1) % n];
    const Vec2 t1 = (b - a) / distance(a, b), t2 = (c - b) / distance(b, c);
    const Vec2 n1{-t1.y, t1.x}, n2{-t2.y, t2.x};  // inward for ccw
    const Vec2 p1 = a + d * n1, p2 = b + d * n2;
    const double den = cross(t1, t2);
    const double s = cross(p2 - p1, t2) / den;
    out[i] = p1 + s * t1;
  }
  return out;
}

double loop_distance(const std::vector<Vec2> &loop, Vec2 p) {
  if (loop.size() == 1) return distance(loop[0], p);
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < loop.size(); ++i)
    d = std::min(d, point_segment_distance(p, loop[i], loop[(i + 1) % loop.size()]));
  return d;
}

bool even_odd(const std::vector<std::vector<Vec2>> &loops, Vec2 p, double tol) {
  bool inside = false;
  for (const auto &loop : loops) {
    if (loop_distance(loop, p) <= tol) return true;
    if (loop.size() >= 3 && point_in_polygon(loop, p)) inside = !inside;
  }
  return inside;
}

std::vector<Vec2> to_log(const std::vector<Vec2> &loop) {
  std::vector<Vec2> out;
  out.reserve(loop.size());
  for (const Vec2 &p : loop) {
    if (!(p.x > 0.0) || !(p.y > 0.0)) throw Error("feasible set: nonpositive (rho_hat, kappa_hat) vertex");
    out.push_back({std::log(p.x), std::log(p.y)});
  }
  return out;
}

bool loop_is_simple(const std::vector<Vec2> &loop) {
  if (loop.size() < 3) return true;
  Contour c;
  c.vertices = loop;
  return c.is_simple();
}

}  // namespace

const char *family_name(Family f) { return f == Family::Star ? "star" : "cylinder"; }

Family parse_family(const std::string &s) {
  if (s == "cylinder") return Family::Cylinder;
  if (s == "star") return Family::Star;
  throw Error("unknown cell family '" + s + "' (expected cylinder or star)");
}

double rule_of_mixtures(const std::vector<std::pair<double, double>> &fd) {
  double sum = 0.0, rho = 0.0;
  for (const auto &[chi, r] : fd) {
    if (chi < 0.0) throw Error("rule_of_mixtures: negative volume fraction");
    sum += chi;
    rho += chi * r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("rule_of_mixtures: volume fractions do not sum to one");
  return rho;
}

double kappa_from_phase_speed(double c_ph, double rho_hom) {
  if (!(c_ph > 0.0)) throw Error("kappa_from_phase_speed: phase speed must be positive");
  return c_ph * c_ph * rho_hom;
}

double hexagon_cell_area() { return 1.5 * kSqrt3; }

void CylinderConstraints::validate() const {
  if (!(delta_r2 >= 0.0) || !(delta_r1 >= 0.0)) throw Error("cylinder constraints: minimum features must be >= 0");
  if (delta_r1 + delta_r2 > 0.5 * kSqrt3 - delta_r1 + 1e-15)
    throw Error("cylinder constraints: no admissible radii (delta_r1 too large)");
}

bool CylinderConstraints::admits(const CellGeometryCylinder &g, double tol) const {
  return g.r_in_hat >= delta_r1 - tol && g.r_out_hat <= 0.5 * kSqrt3 - delta_r1 + tol &&
         g.r_out_hat >= g.r_in_hat + delta_r2 - tol;
}

CellGeometryCylinder CylinderConstraints::from_logical(double s, double t) const {
  const double a = delta_r1, b = 0.5 * kSqrt3 - delta_r1, d = delta_r2;
  const double r_in = a + s * (b - d - a);
  return {r_in, r_in + d + t * (b - r_in - d)};
}

void StarConstraints::validate() const {
  if (!(p_min > 0.0) || !(P_max > 0.0)) throw Error("star constraints: p_min and P_max are required and positive");
  if (p_min > P_max) throw Error("star constraints: p_min exceeds P_max");
  if (P_max > 0.5 * kSqrt3) throw Error("star constraints: P_max exceeds the hexagon inradius");
  if (n_points < 3 || n_points % 3 != 0) throw Error("star constraints: n_points must be a positive multiple of 3");
  if (!(wall > 0.0) || wall >= p_min) throw Error("star constraints: wall must be positive and below p_min");
}

bool StarConstraints::admits(const CellGeometryStar &g, double tol) const {
  return g.p_hat >= p_min - tol && g.p_hat <= g.P_hat + tol && g.P_hat <= P_max + tol;
}

CellGeometryStar StarConstraints::from_logical(double s, double t) const {
  const double p = p_min + s * (P_max - p_min);
  return {p, p + t * (P_max - p), n_points};
}

double cylinder_rho_hat(const CellGeometryCylinder &g, const PhaseData &ph) {
  const double A = hexagon_cell_area();
  const double chi_air = std::numbers::pi * g.r_in_hat * g.r_in_hat / A;
  const double chi_solid = std::numbers::pi * (g.r_out_hat * g.r_out_hat - g.r_in_hat * g.r_in_hat) / A;
  const double chi_water = 1.0 - chi_air - chi_solid;
  return rule_of_mixtures({{chi_water, ph.rho_water}, {chi_air, ph.rho_air}, {chi_solid, ph.rho_solid}}) /
         ph.rho_water;
}

std::pair<double, double> star_areas(const CellGeometryStar &g, double wall) {
  const auto outer = star_polygon(g.p_hat, g.P_hat, g.n_points);
  const auto inner = miter_offset(outer, wall);
  if (!loop_is_simple(inner) || polygon_signed_area(inner) <= 0.0)
    throw Error("star cell: wall offset is not a simple polygon");
  const double a_out = polygon_signed_area(outer);
  const double a_in = polygon_signed_area(inner);
  return {a_out - a_in, a_in};
}

double star_rho_hat(const CellGeometryStar &g, double wall, const PhaseData &ph) {
  const auto [solid, core] = star_areas(g, wall);
  const double A = hexagon_cell_area();
  const double chi_solid = solid / A, chi_air = core / A;
  return rule_of_mixtures({{1.0 - chi_solid - chi_air, ph.rho_water}, {chi_air, ph.rho_air}, {chi_solid, ph.rho_solid}}) /
         ph.rho_water;
}

namespace {

HomogenizationTable::Row make_row(double p1, double p2, double rho_hat, double kappa_hat) {
  const double c = std::sqrt(kappa_hat / rho_hat);
  return {p1, p2, rho_hat, kappa_from_phase_speed(c, rho_hat), c};
}

// Wood mixing of water with an inclusion of given bulk stiffness and area.
double wood_kappa_hat(double inclusion_area, double inclusion_bulk, const PhaseData &ph) {
  const double chi = inclusion_area / hexagon_cell_area();
  return 1.0 / ((1.0 - chi) + chi * ph.kappa_water / inclusion_bulk);
}

}  // namespace

HomogenizationTable synthetic_cylinder_table(const CylinderConstraints &c, int n1, int n2, const PhaseData &ph) {
  c.validate();
  if (n1 < 2 || n2 < 2) throw Error("table: grid needs at least 2 x 2 samples");
  HomogenizationTable t{Family::Cylinder, n1, n2, {}};
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const auto g = c.from_logical(static_cast<double>(i) / (n1 - 1), static_cast<double>(j) / (n2 - 1));
      const double rho = cylinder_rho_hat(g, ph);
      const double kap = wood_kappa_hat(std::numbers::pi * g.r_out_hat * g.r_out_hat,
                                        ring_bulk(g.r_out_hat, g.r_in_hat, ph), ph);
      t.rows.push_back(make_row(g.r_in_hat, g.r_out_hat, rho, kap));
    }
  return t;
}

HomogenizationTable synthetic_star_table(const StarConstraints &c, int n1, int n2, const PhaseData &ph) {
  c.validate();
  if (n1 < 2 || n2 < 2) throw Error("table: grid needs at least 2 x 2 samples");
  HomogenizationTable t{Family::Star, n1, n2, {}};
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) {
      const auto g = c.from_logical(static_cast<double>(i) / (n1 - 1), static_cast<double>(j) / (n2 - 1));
      const double rho = star_rho_hat(g, c.wall, ph);
      const auto [solid, core] = star_areas(g, c.wall);
      const double bulk = ring_bulk(g.P_hat, g.P_hat - c.wall, ph) * std::pow(g.p_hat / g.P_hat, g.n_points / 4.0);
      t.rows.push_back(make_row(g.p_hat, g.P_hat, rho, wood_kappa_hat(solid + core, bulk, ph)));
    }
  return t;
}

void HomogenizationTable::validate() const {
  if (n1 < 2 || n2 < 2) throw Error("table: grid needs at least 2 x 2 samples");
  if (rows.size() != static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2))
    throw Error("table: row count does not match n1 x n2");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Row &x = rows[r];
    if (!(x.rho_hat > 0.0) || !(x.kappa_hat > 0.0) || !(x.c_ratio > 0.0) || !std::isfinite(x.kappa_hat))
      throw Error("table: nonpositive or missing properties in row " + std::to_string(r));
    if (std::abs(x.c_ratio * x.c_ratio * x.rho_hat - x.kappa_hat) > 1e-9 * x.kappa_hat)
      throw Error("table: kappa_hat != (c_ph/c0)^2 rho_hat in row " + std::to_string(r));
  }
}

HomogenizationTable::Row HomogenizationTable::interpolate(double s, double t) const {
  s = std::clamp(s, 0.0, 1.0);
  t = std::clamp(t, 0.0, 1.0);
  const double fs = s * (n1 - 1), ft = t * (n2 - 1);
  const int i = std::min(static_cast<int>(fs), n1 - 2);
  const int j = std::min(static_cast<int>(ft), n2 - 2);
  const double a = fs - i, b = ft - j;
  const Row &r00 = at(i, j), &r10 = at(i + 1, j), &r01 = at(i, j + 1), &r11 = at(i + 1, j + 1);
  const auto mix = [&](double Row::*f) {
    return (1 - a) * (1 - b) * r00.*f + a * (1 - b) * r10.*f + (1 - a) * b * r01.*f + a * b * r11.*f;
  };
  return {mix(&Row::param1), mix(&Row::param2), mix(&Row::rho_hat), mix(&Row::kappa_hat), mix(&Row::c_ratio)};
}

void write_table(std::ostream &os, const HomogenizationTable &t) {
  os.precision(17);
  os << family_name(t.family) << ' ' << t.n1 << ' ' << t.n2 << '\n';
  for (const auto &r : t.rows)
    os << r.param1 << ' ' << r.param2 << ' ' << r.rho_hat << ' ' << r.kappa_hat << ' ' << r.c_ratio << '\n';
}

HomogenizationTable read_table(std::istream &is) {
  HomogenizationTable t;
  std::string fam;
  if (!(is >> fam >> t.n1 >> t.n2)) throw Error("table file: bad header (expected 'family n1 n2')");
  t.family = parse_family(fam);
  if (t.n1 < 2 || t.n2 < 2) throw Error("table file: grid needs at least 2 x 2 samples");
  t.rows.resize(static_cast<std::size_t>(t.n1) * static_cast<std::size_t>(t.n2));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto &x = t.rows[r];
    if (!(is >> x.param1 >> x.param2 >> x.rho_hat >> x.kappa_hat >> x.c_ratio))
      throw Error("table file: missing row " + std::to_string(r) + " (table gap)");
  }
  t.validate();
  return t;
}

bool FeasibleSet::contains(double rho_hat, double kappa_hat, double tol) const {
  if (!(rho_hat > 0.0) || !(kappa_hat > 0.0)) return false;
  return to_control_space(*this).contains({std::log(rho_hat), std::log(kappa_hat)}, tol);
}

void FeasibleSet::validate() const {
  if (loops.empty()) throw Error("feasible set: no loops");
  if (tags.size() != loops.size()) throw Error("feasible set: tag count mismatch");
  for (std::size_t k = 0; k < loops.size(); ++k) {
    if (loops[k].empty() || loops[k].size() == 2) throw Error("feasible set: loop with fewer than 3 vertices");
    if (tags[k].size() != loops[k].size()) throw Error("feasible set: tag count mismatch");
    if (!loop_is_simple(to_log(loops[k]))) throw Error("feasible set: loop " + std::to_string(k) + " is not simple");
  }
}

ControlSet::ControlSet(std::vector<std::vector<Vec2>> loops) : loops_(std::move(loops)) {
  if (loops_.empty()) throw Error("control set: empty feasible set");
}

bool ControlSet::contains(Vec2 vu, double tol) const { return even_odd(loops_, vu, tol); }

double ControlSet::boundary_distance(Vec2 vu) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto &l : loops_) d = std::min(d, loop_distance(l, vu));
  return d;
}

Vec2 ControlSet::project(Vec2 vu) const {
  if (loops_.empty()) throw Error("projection onto an empty feasible set");
  if (contains(vu, 1e-12)) return vu;
  double best = std::numeric_limits<double>::infinity();
  Vec2 out = vu;
  for (const auto &loop : loops_) {
    if (loop.size() == 1) {
      const double d = distance(loop[0], vu);
      if (d < best) { best = d; out = loop[0]; }
      continue;
    }
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const Vec2 c = closest_point_on_segment(vu, loop[i], loop[(i + 1) % loop.size()]);
      const double d = distance(c, vu);
      if (d < best) { best = d; out = c; }
    }
  }
  return out;
}

ControlSet to_control_space(const FeasibleSet &set) {
  std::vector<std::vector<Vec2>> loops;
  for (const auto &l : set.loops) loops.push_back(to_log(l));
  return ControlSet(std::move(loops));
}

FeasibleSet from_control_space(const ControlSet &set) {
  FeasibleSet fs;
  for (const auto &l : set.loops()) {
    std::vector<Vec2> loop;
    for (const Vec2 &p : l) loop.push_back({std::exp(p.x), std::exp(p.y)});
    fs.tags.emplace_back(loop.size(), Family::Cylinder);
    fs.loops.push_back(std::move(loop));
  }
  return fs;
}

FeasibleSet trace_feasible_boundary(const HomogenizationTable &table) {
  table.validate();
  std::vector<Vec2> walk;
  const int n1 = table.n1, n2 = table.n2;
  for (int j = 0; j < n2; ++j) walk.push_back({table.at(0, j).rho_hat, table.at(0, j).kappa_hat});
  for (int i = 1; i < n1; ++i) walk.push_back({table.at(i, n2 - 1).rho_hat, table.at(i, n2 - 1).kappa_hat});
  for (int j = n2 - 2; j >= 0; --j) walk.push_back({table.at(n1 - 1, j).rho_hat, table.at(n1 - 1, j).kappa_hat});
  for (int i = n1 - 2; i >= 1; --i) walk.push_back({table.at(i, 0).rho_hat, table.at(i, 0).kappa_hat});

  std::vector<Vec2> loop;
  for (const Vec2 &p : walk) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("trace: table gap on the constraint boundary");
    const double scale = std::max(norm(p), 1.0);
    if (loop.empty() || distance(loop.back(), p) > 1e-13 * scale) loop.push_back(p);
  }
  while (loop.size() > 1 && distance(loop.front(), loop.back()) <= 1e-13 * std::max(norm(loop.front()), 1.0))
    loop.pop_back();

  FeasibleSet fs;
  if (loop.size() < 3) {
    loop.resize(1);
  } else {
    const auto lg = to_log(loop);
    if (std::abs(polygon_signed_area(lg)) < 1e-300) {
      loop.resize(1);
    } else {
      if (polygon_signed_area(lg) < 0.0) std::reverse(loop.begin(), loop.end());
      if (!loop_is_simple(to_log(loop)))
        throw Error(std::string("trace: image of the ") + family_name(table.family) +
                    " constraint boundary self-intersects (map is not injective)");
    }
  }
  fs.tags.emplace_back(loop.size(), table.family);
  fs.loops.push_back(std::move(loop));
  return fs;
}

FeasibleSet union_sets(const std::vector<FeasibleSet> &sets) {
  struct TaggedLoop {
    std::vector<Vec2> log_loop;
    std::vector<Family> tags;
  };
  std::vector<TaggedLoop> sources;
  std::vector<Vec2> points;
  std::vector<Family> point_tags;
  BgMulti acc;
  for (const FeasibleSet &s : sets)
    for (std::size_t k = 0; k < s.loops.size(); ++k) {
      const auto lg = to_log(s.loops[k]);
      if (lg.size() == 1) {
        points.push_back(lg[0]);
        point_tags.push_back(s.tags[k][0]);
        continue;
      }
      sources.push_back({lg, s.tags[k]});
      BgPolygon poly;
      std::vector<Vec2> ring = lg;
      if (polygon_signed_area(ring) < 0.0) std::reverse(ring.begin(), ring.end());
      for (const Vec2 &p : ring) bg::append(poly.outer(), BgPoint(p.x, p.y));
      bg::append(poly.outer(), BgPoint(ring[0].x, ring[0].y));
      bg::correct(poly);
      BgMulti next;
      bg::union_(acc, poly, next);
      acc = std::move(next);
    }

  const auto tag_of = [&](Vec2 p) {
    double best = std::numeric_limits<double>::infinity();
    Family f = Family::Cylinder;
    for (const auto &src : sources)
      for (std::size_t i = 0; i < src.log_loop.size(); ++i) {
        const double d = point_segment_distance(p, src.log_loop[i], src.log_loop[(i + 1) % src.log_loop.size()]);
        if (d < best) { best = d; f = src.tags[i]; }
      }
    return f;
  };

  FeasibleSet out;
  const auto emit = [&](const auto &ring) {
    std::vector<Vec2> loop;
    std::vector<Family> tags;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
      const Vec2 p{bg::get<0>(ring[i]), bg::get<1>(ring[i])};
      loop.push_back({std::exp(p.x), std::exp(p.y)});
      tags.push_back(tag_of(p));
    }
    out.loops.push_back(std::move(loop));
    out.tags.push_back(std::move(tags));
  };
  for (const BgPolygon &poly : acc) {
    emit(poly.outer());
    for (const auto &inner : poly.inners()) emit(inner);
  }
  std::vector<std::vector<Vec2>> log_loops;
  for (const auto &l : out.loops) log_loops.push_back(to_log(l));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!log_loops.empty() && even_odd(log_loops, points[i], 1e-12)) continue;
    bool dup = false;
    for (std::size_t j = 0; j < i; ++j) dup = dup || distance(points[i], points[j]) <= 1e-12;
    if (dup) continue;
    out.loops.push_back({{std::exp(points[i].x), std::exp(points[i].y)}});
    out.tags.push_back({point_tags[i]});
  }
  if (out.loops.empty()) throw Error("union: empty feasible set");
  return out;
}

void write_feasible_set(std::ostream &os, const FeasibleSet &set) {
  os.precision(17);
  for (std::size_t k = 0; k < set.loops.size(); ++k) {
    if (k > 0) os << '\n';
    for (std::size_t i = 0; i < set.loops[k].size(); ++i)
      os << set.loops[k][i].x << ' ' << set.loops[k][i].y << ' ' << family_name(set.tags[k][i]) << '\n';
  }
}

FeasibleSet read_feasible_set(std::istream &is) {
  FeasibleSet fs;
  std::vector<Vec2> loop;
  std::vector<Family> tags;
  std::string line;
  std::size_t lineno = 0;
  const auto flush = [&] {
    if (!loop.empty()) {
      fs.loops.push_back(std::move(loop));
      fs.tags.push_back(std::move(tags));
      loop.clear();
      tags.clear();
    }
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    if (line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ls(line);
    Vec2 p;
    std::string tag;
    if (!(ls >> p.x >> p.y >> tag)) throw Error("feasible set file: bad line " + std::to_string(lineno));
    if (!(p.x > 0.0) || !(p.y > 0.0))
      throw Error("feasible set file: nonpositive vertex on line " + std::to_string(lineno));
    loop.push_back(p);
    tags.push_back(parse_family(tag));
  }
  flush();
  fs.validate();
  return fs;
}

namespace {

// Value and logical-coordinate derivatives of the bilinear interpolant.
struct Sample {
  Vec2 f;
  Vec2 ds;
  Vec2 dt;
};

Sample sample(const HomogenizationTable &tb, double s, double t) {
  const double fs = s * (tb.n1 - 1), ft = t * (tb.n2 - 1);
  const int i = std::clamp(static_cast<int>(fs), 0, tb.n1 - 2);
  const int j = std::clamp(static_cast<int>(ft), 0, tb.n2 - 2);
  const double a = fs - i, b = ft - j;
  const auto P = [&](int ii, int jj) { return Vec2{tb.at(ii, jj).rho_hat, tb.at(ii, jj).kappa_hat}; };
  const Vec2 f00 = P(i, j), f10 = P(i + 1, j), f01 = P(i, j + 1), f11 = P(i + 1, j + 1);
  Sample out;
  out.f = (1 - a) * (1 - b) * f00 + a * (1 - b) * f10 + (1 - a) * b * f01 + a * b * f11;
  out.ds = static_cast<double>(tb.n1 - 1) * ((1 - b) * (f10 - f00) + b * (f11 - f01));
  out.dt = static_cast<double>(tb.n2 - 1) * ((1 - a) * (f01 - f00) + a * (f11 - f10));
  return out;
}

// Boundary segments of S are straight in log space, so they bulge slightly
// past the linear-space hull of the samples.
constexpr double kHullTolerance = 1e-3;

bool in_hull(const HomogenizationTable &tb, Vec2 target) {
  bg::model::multi_point<BgPoint> pts;
  for (const auto &r : tb.rows) bg::append(pts, BgPoint(r.rho_hat, r.kappa_hat));
  BgPolygon hull;
  bg::convex_hull(pts, hull);
  const BgPoint q(target.x, target.y);
  return bg::covered_by(q, hull) || bg::distance(q, hull) <= kHullTolerance;
}

}  // namespace

InversionResult invert_cell(Vec2 target, const std::vector<HomogenizationTable> &tables) {
  if (tables.empty()) throw Error("invert_cell: no tables");
  InversionResult best;
  best.residual = std::numeric_limits<double>::infinity();
  bool any_hull = false;
  for (const HomogenizationTable &tb : tables) {
    if (!in_hull(tb, target)) continue;
    any_hull = true;
    int bi = 0, bj = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int i = 0; i < tb.n1; ++i)
      for (int j = 0; j < tb.n2; ++j) {
        const double d = distance(Vec2{tb.at(i, j).rho_hat, tb.at(i, j).kappa_hat}, target);
        if (d < bd) { bd = d; bi = i; bj = j; }
      }
    double s = static_cast<double>(bi) / (tb.n1 - 1), t = static_cast<double>(bj) / (tb.n2 - 1);
    Sample cur = sample(tb, s, t);
    double res = distance(cur.f, target);
    double mu = 1e-6;
    for (int it = 0; it < 50 && res > 1e-12; ++it) {
      const Vec2 r = cur.f - target;
      const double a11 = dot(cur.ds, cur.ds) + mu, a12 = dot(cur.ds, cur.dt), a22 = dot(cur.dt, cur.dt) + mu;
      const double g1 = dot(cur.ds, r), g2 = dot(cur.dt, r);
      const double det = a11 * a22 - a12 * a12;
      if (!(std::abs(det) > 0.0)) break;
      const double ns = std::clamp(s - (a22 * g1 - a12 * g2) / det, 0.0, 1.0);
      const double nt = std::clamp(t - (a11 * g2 - a12 * g1) / det, 0.0, 1.0);
      const Sample trial = sample(tb, ns, nt);
      const double tres = distance(trial.f, target);
      if (tres < res) {
        s = ns;
        t = nt;
        cur = trial;
        res = tres;
        mu = std::max(mu * 0.1, 1e-12);
      } else {
        mu *= 10.0;
        if (mu > 1e12) break;
      }
    }
    if (res < best.residual) {
      const auto row = tb.interpolate(s, t);
      best = {tb.family, row.param1, row.param2, s, t, cur.f.x, cur.f.y, res};
    }
  }
  if (!any_hull) throw Error("invert_cell: target outside every table hull");
  return best;
}

}  // namespace cloak
