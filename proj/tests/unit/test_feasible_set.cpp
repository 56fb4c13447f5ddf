#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"

#include "cloakopt/error.hpp"
#include "cloakopt/fem.hpp"
#include "cloakopt/feasible_set.hpp"

using namespace cloak;

namespace {

constexpr double pi = std::numbers::pi;

StarConstraints star_defaults() {
  StarConstraints s;
  s.p_min = 0.3;
  s.P_max = 0.666;
  return s;
}

struct Tables {
  HomogenizationTable cyl, star;
  FeasibleSet s_cyl, s_star, S;
};

const Tables &tables() {
  static const Tables t = [] {
    Tables r;
    r.cyl = synthetic_cylinder_table(CylinderConstraints{}, 41, 41);
    r.star = synthetic_star_table(star_defaults(), 41, 41);
    r.s_cyl = trace_feasible_boundary(r.cyl);
    r.s_star = trace_feasible_boundary(r.star);
    r.S = union_sets({r.s_cyl, r.s_star});
    return r;
  }();
  return t;
}

double shoelace(const std::vector<Vec2> &p) {
  double a = 0;
  for (std::size_t i = 0; i < p.size(); ++i) a += p[i].x * p[(i + 1) % p.size()].y - p[(i + 1) % p.size()].x * p[i].y;
  return 0.5 * a;
}

bool inside_any(const std::vector<std::vector<Vec2>> &loops, Vec2 p) {
  for (const auto &l : loops)
    if (l.size() >= 3 && point_in_polygon(l, p)) return true;
  return false;
}

double dist_to_loops(const std::vector<std::vector<Vec2>> &loops, Vec2 p) {
  double d = 1e300;
  for (const auto &l : loops)
    for (std::size_t i = 0; i < l.size(); ++i) d = std::min(d, point_segment_distance(p, l[i], l[(i + 1) % l.size()]));
  return d;
}

}  // namespace

TEST_CASE("rule of mixtures") {
  CHECK(rule_of_mixtures({{1.0, 998.0}}) == 998.0);
  CHECK(rule_of_mixtures({{0.5, 998.0}, {0.5, 2700.0}}) == doctest::Approx(1849.0).epsilon(1e-15));
  CHECK(rule_of_mixtures({{0.5, 2700.0}, {0.5, 998.0}}) == rule_of_mixtures({{0.5, 998.0}, {0.5, 2700.0}}));
  CHECK(rule_of_mixtures({{0.2, 1.23}, {0.3, 998.0}, {0.5, 2700.0}}) ==
        doctest::Approx(rule_of_mixtures({{0.5, 2700.0}, {0.2, 1.23}, {0.3, 998.0}})).epsilon(1e-15));
  // linear in the phase densities
  const double a = rule_of_mixtures({{0.3, 100.0}, {0.7, 200.0}});
  const double b = rule_of_mixtures({{0.3, 40.0}, {0.7, 10.0}});
  CHECK(rule_of_mixtures({{0.3, 140.0}, {0.7, 210.0}}) == doctest::Approx(a + b).epsilon(1e-15));
  CHECK_THROWS_AS(rule_of_mixtures({{0.5, 998.0}, {0.4, 2700.0}}), Error);
  CHECK_THROWS_AS(rule_of_mixtures({{1.2, 998.0}, {-0.2, 2700.0}}), Error);
  CHECK_NOTHROW(rule_of_mixtures({{0.5 + 1e-10, 998.0}, {0.5, 2700.0}}));
}

TEST_CASE("phase speed to bulk modulus") {
  BackgroundMedium med;
  CHECK(kappa_from_phase_speed(med.c0(), med.rho0) == doctest::Approx(med.kappa0).epsilon(1e-14));
  CHECK(kappa_from_phase_speed(20.0, 3.0) == doctest::Approx(4 * kappa_from_phase_speed(10.0, 3.0)).epsilon(1e-15));
  CHECK_THROWS_AS(kappa_from_phase_speed(0.0, 1.0), Error);
}

TEST_CASE("cylinder density matches exact phase areas") {
  PhaseData ph;
  const std::vector<Vec2> hexagon = [] {
    std::vector<Vec2> v;
    for (int k = 0; k < 6; ++k) v.push_back({std::cos(pi / 3 * k), std::sin(pi / 3 * k)});
    return v;
  }();
  const double A = shoelace(hexagon);
  CHECK(hexagon_cell_area() == doctest::Approx(A).epsilon(1e-15));
  const CylinderConstraints c;
  for (double s : {0.0, 0.3, 1.0})
    for (double t : {0.0, 0.5, 1.0}) {
      const auto g = c.from_logical(s, t);
      CHECK(c.admits(g));
      const double air = pi * g.r_in_hat * g.r_in_hat;
      const double ring = pi * g.r_out_hat * g.r_out_hat - air;
      const double rho = (ph.rho_water * (A - air - ring) + ph.rho_air * air + ph.rho_solid * ring) / A;
      CHECK(std::abs(cylinder_rho_hat(g, ph) - rho / ph.rho_water) <= 1e-9);
    }
}

TEST_CASE("star shell areas match the miter offset formula") {
  // inward miter offset by d: A(d) = A - P d + d^2 sum cot(alpha_i / 2)
  PhaseData ph;
  const auto sc = star_defaults();
  for (double s : {0.0, 0.4, 1.0})
    for (double t : {0.0, 0.5, 1.0}) {
      const auto g = sc.from_logical(s, t);
      CHECK(sc.admits(g));
      const int n = g.n_points;
      std::vector<Vec2> v;
      for (int i = 0; i < 2 * n; ++i) {
        const double r = i % 2 == 0 ? g.P_hat : g.p_hat;
        v.push_back({r * std::cos(i * pi / n), r * std::sin(i * pi / n)});
      }
      const double A = n * g.P_hat * g.p_hat * std::sin(pi / n);
      CHECK(shoelace(v) == doctest::Approx(A).epsilon(1e-13));
      double P = 0, cot_sum = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2 a = v[(i + v.size() - 1) % v.size()], b = v[i], c = v[(i + 1) % v.size()];
        P += distance(b, c);
        const double turn = std::atan2(cross(b - a, c - b), dot(b - a, c - b));
        const double interior = pi - turn;
        cot_sum += 1.0 / std::tan(interior / 2);
      }
      const double d = sc.wall;
      const double core = A - P * d + d * d * cot_sum;
      const auto [solid, air] = star_areas(g, d);
      CHECK(air == doctest::Approx(core).epsilon(1e-10));
      CHECK(solid == doctest::Approx(A - core).epsilon(1e-10));
      const double Ah = hexagon_cell_area();
      const double rho = (ph.rho_water * (Ah - A) + ph.rho_air * core + ph.rho_solid * (A - core)) / Ah;
      CHECK(std::abs(star_rho_hat(g, d, ph) - rho / ph.rho_water) <= 1e-9);
    }
}

TEST_CASE("constraint validation") {
  CHECK_THROWS_AS(StarConstraints{}.validate(), Error);
  auto s = star_defaults();
  s.n_points = 10;
  CHECK_THROWS_AS(s.validate(), Error);
  s = star_defaults();
  s.P_max = 0.9;
  CHECK_THROWS_AS(s.validate(), Error);
  CylinderConstraints c;
  c.delta_r1 = 0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_FALSE(CylinderConstraints{}.admits({0.1, 0.5}));
  CHECK_FALSE(CylinderConstraints{}.admits({0.3, 0.32}));
  CHECK(CylinderConstraints{}.admits({0.3, 0.35}));
}

TEST_CASE("tables satisfy kappa = (c_ph / c0)^2 rho") {
  for (const auto *t : {&tables().cyl, &tables().star}) {
    CHECK_NOTHROW(t->validate());
    for (const auto &r : t->rows) CHECK(std::abs(r.c_ratio * r.c_ratio * r.rho_hat - r.kappa_hat) <= 1e-9 * r.kappa_hat);
  }
  auto bad = tables().cyl;
  bad.rows[5].kappa_hat *= 1.001;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("table interpolation reproduces grid samples") {
  const auto &t = tables().cyl;
  const auto r = t.interpolate(10.0 / 40, 30.0 / 40);
  CHECK(r.rho_hat == doctest::Approx(t.at(10, 30).rho_hat).epsilon(1e-14));
  CHECK(r.param2 == doctest::Approx(t.at(10, 30).param2).epsilon(1e-14));
  const auto m = t.interpolate(0.5 / 40, 0.0);
  CHECK(m.kappa_hat == doctest::Approx(0.5 * (t.at(0, 0).kappa_hat + t.at(1, 0).kappa_hat)).epsilon(1e-14));
}

TEST_CASE("light phase gives densities below water") {
  bool below = false;
  for (const auto &loop : tables().S.loops)
    for (const auto &p : loop) below = below || p.x < 1.0;
  CHECK(below);
  for (const auto &loop : tables().S.loops)
    for (const auto &p : loop) {
      CHECK(p.x > 0);
      CHECK(p.y > 0);
    }
}

TEST_CASE("background water is reachable") {
  CHECK(tables().S.contains(1.0, 1.0));
  CHECK_NOTHROW(tables().S.validate());
  CHECK(to_control_space(tables().S).contains({0.0, 0.0}));
}

TEST_CASE("degenerate cylinder constraints collapse the set to a point") {
  CylinderConstraints c;
  c.delta_r2 = 0.05;
  c.delta_r1 = (std::sqrt(3.0) / 2 - c.delta_r2) / 2;
  const auto t = synthetic_cylinder_table(c, 5, 5);
  const auto s = trace_feasible_boundary(t);
  REQUIRE(s.loops.size() == 1);
  CHECK(s.loops[0].size() == 1);
  const Vec2 p = s.loops[0][0];
  CHECK(s.contains(p.x, p.y));
  CHECK_FALSE(s.contains(p.x * 1.01, p.y));
  ControlSet cs = to_control_space(s);
  const Vec2 q = cs.project({0.0, 0.0});
  CHECK(q.x == doctest::Approx(std::log(p.x)).epsilon(1e-14));
  CHECK(q.y == doctest::Approx(std::log(p.y)).epsilon(1e-14));
}

TEST_CASE("union agrees with rasterized membership") {
  const auto &T = tables();
  const std::vector<std::vector<Vec2>> sources = {to_control_space(T.s_cyl).loops()[0],
                                                  to_control_space(T.s_star).loops()[0]};
  const ControlSet U = to_control_space(T.S);
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto &l : sources)
    for (const auto &p : l) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  const int n = 2000;
  int mismatches = 0, inside = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 p{x0 + (x1 - x0) * (i + 0.5) / n, y0 + (y1 - y0) * (j + 0.5) / n};
      const bool oracle = inside_any(sources, p);
      inside += oracle;
      if (U.contains(p, 0.0) != oracle && dist_to_loops(sources, p) > 1e-9) ++mismatches;
    }
  CHECK(mismatches == 0);
  CHECK(inside > n * n / 20);
}

TEST_CASE("log map examples, identity and dual membership") {
  FeasibleSet tri;
  tri.loops = {{{1.0, 1.0}, {std::exp(1.0), std::exp(2.0)}, {0.5, 2.0}}};
  tri.tags = {{Family::Cylinder, Family::Star, Family::Star}};
  const auto cs = to_control_space(tri);
  CHECK(cs.loops()[0][0] == Vec2{0.0, 0.0});
  CHECK(cs.loops()[0][1].x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cs.loops()[0][1].y == doctest::Approx(2.0).epsilon(1e-15));

  const auto &S = tables().S;
  const auto back = from_control_space(to_control_space(S));
  for (std::size_t k = 0; k < S.loops.size(); ++k)
    for (std::size_t i = 0; i < S.loops[k].size(); ++i) {
      CHECK(std::abs(back.loops[k][i].x - S.loops[k][i].x) <= 1e-14 * S.loops[k][i].x);
      CHECK(std::abs(back.loops[k][i].y - S.loops[k][i].y) <= 1e-14 * S.loops[k][i].y);
    }

  const ControlSet U = to_control_space(S);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> R(0.3, 2.5);
  int in = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = R(rng), k = R(rng);
    const bool a = S.contains(r, k);
    CHECK(a == U.contains({std::log(r), std::log(k)}));
    in += a;
  }
  CHECK(in > 100);
  // boundary vertices count as members
  for (const auto &loop : S.loops)
    for (const auto &p : loop) CHECK(S.contains(p.x, p.y));

  FeasibleSet bad;
  bad.loops = {{{1.0, 1.0}, {-1.0, 2.0}, {0.5, 2.0}}};
  bad.tags = {{Family::Cylinder, Family::Cylinder, Family::Cylinder}};
  CHECK_THROWS_AS(to_control_space(bad), Error);
}

TEST_CASE("table and feasible-set files round trip") {
  std::stringstream ts;
  write_table(ts, tables().star);
  const auto t = read_table(ts);
  CHECK(t.family == Family::Star);
  REQUIRE(t.rows.size() == tables().star.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(t.rows[i].kappa_hat == tables().star.rows[i].kappa_hat);

  std::stringstream fs;
  write_feasible_set(fs, tables().S);
  const auto s = read_feasible_set(fs);
  CHECK(s.loops == tables().S.loops);
  CHECK(s.tags == tables().S.tags);

  std::stringstream gap("cylinder 2 2\n0.1 0.2 1 1 1\n0.1 0.3 1 1 1\n0.2 0.3 1 1 1\n");
  CHECK_THROWS_AS(read_table(gap), Error);
  std::stringstream fam("hexagon 2 2\n");
  CHECK_THROWS_AS(read_table(fam), Error);
  std::stringstream neg("1 1 cylinder\n-1 2 star\n1 2 star\n");
  CHECK_THROWS_AS(read_feasible_set(neg), Error);
  std::stringstream comment("# a comment\n1 1 cylinder\n2 1 star\n1 2 star\n");
  CHECK(read_feasible_set(comment).loops.size() == 1);
}

TEST_CASE("inversion hits grid samples exactly") {
  const auto &t = tables().cyl;
  const auto &row = t.at(7, 23);
  const auto r = invert_cell({row.rho_hat, row.kappa_hat}, {tables().cyl, tables().star});
  CHECK(r.residual == 0.0);
  CHECK(r.family == Family::Cylinder);
  CHECK(r.param1 == row.param1);
  CHECK(r.param2 == row.param2);
}

TEST_CASE("inversion of water and of random in-set targets") {
  const std::vector<HomogenizationTable> both{tables().cyl, tables().star};
  const auto w = invert_cell({1.0, 1.0}, both);
  CHECK(w.residual < 1e-3);
  CHECK(std::hypot(w.rho_hat - 1.0, w.kappa_hat - 1.0) < 1e-3);

  const auto &S = tables().S;
  double r0 = 1e300, r1 = 0, k0 = 1e300, k1 = 0;
  for (const auto &l : S.loops)
    for (const auto &p : l) r0 = std::min(r0, p.x), r1 = std::max(r1, p.x), k0 = std::min(k0, p.y), k1 = std::max(k1, p.y);
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> U(0, 1);
  int done = 0;
  while (done < 100) {
    const Vec2 target{r0 + (r1 - r0) * U(rng), k0 + (k1 - k0) * U(rng)};
    if (!S.contains(target.x, target.y)) continue;
    ++done;
    const auto r = invert_cell(target, both);
    const auto &tb = r.family == Family::Cylinder ? tables().cyl : tables().star;
    const auto row = tb.interpolate(r.s, r.t);
    CHECK(std::hypot(row.rho_hat - target.x, row.kappa_hat - target.y) < 1e-3);
    CHECK(r.residual < 1e-3);
    if (r.family == Family::Cylinder) CHECK(CylinderConstraints{}.admits({r.param1, r.param2}, 1e-9));
    else CHECK(star_defaults().admits({r.param1, r.param2, 12}, 1e-9));
  }
}

TEST_CASE("inversion outside every table hull is an error") {
  CHECK_THROWS_AS(invert_cell({50.0, 50.0}, {tables().cyl, tables().star}), Error);
  CHECK_THROWS_AS(invert_cell({1.0, 1.0}, {}), Error);
}

TEST_CASE("projected boundary points of S invert within tolerance") {
  const ControlSet cs = to_control_space(tables().S);
  double worst = 0.0;
  for (const auto &loop : cs.loops())
    for (std::size_t i = 0; i < loop.size(); ++i) {
      const Vec2 mid = 0.5 * (loop[i] + loop[(i + 1) % loop.size()]);
      const auto r = invert_cell({std::exp(mid.x), std::exp(mid.y)}, {tables().cyl, tables().star});
      worst = std::max(worst, r.residual);
    }
  CHECK(worst < 1e-3);
}

TEST_CASE("family names") {
  CHECK(parse_family("star") == Family::Star);
  CHECK(std::string(family_name(Family::Cylinder)) == "cylinder");
  CHECK_THROWS_AS(parse_family("circle"), Error);
}
