#include "delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "cloakopt/error.hpp"
#include "predicates.hpp"

namespace cloak::detail {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

Vec2 circumcenter(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 ba = b - a;
  const Vec2 ca = c - a;
  const double d = 2.0 * cross(ba, ca);
  const double b2 = dot(ba, ba);
  const double c2 = dot(ca, ca);
  return {a.x + (ca.y * b2 - ba.y * c2) / d, a.y + (ba.x * c2 - ca.x * b2) / d};
}

// Incremental Bowyer-Watson triangulation inside a large enclosing triangle,
// refined with Ruppert's rules against a set of constraint segments.
class Refiner {
 public:
  Refiner(std::span<const PslgLoop> loops, const RefineOptions &opts) : loops_(loops), opts_(opts) {}

  RefinedTriangulation run();

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nb;  // nb[i] is across the edge opposite v[i]
  };
  struct Segment {
    int a;
    int b;
    int loop;
    bool alive;
  };

  std::span<const PslgLoop> loops_;
  const RefineOptions &opts_;

  std::vector<Vec2> pts_;
  std::vector<Tri> tris_;
  std::vector<char> alive_;
  std::vector<int> free_;
  std::vector<int> vtri_;
  std::vector<unsigned> stamp_;
  unsigned epoch_ = 0;
  int last_ = 0;
  unsigned walk_seed_ = 12345u;

  std::vector<Segment> segs_;
  std::unordered_map<std::uint64_t, int> seg_of_edge_;

  // Uniform bucket grid over segment midpoints, for encroachment queries.
  double cell_ = 1.0;
  Vec2 grid_origin_;
  int gnx_ = 1, gny_ = 1;
  std::vector<std::vector<int>> grid_;
  double max_seg_len_ = 0.0;

  void init_super(Vec2 lo, Vec2 hi);
  int new_tri(std::array<int, 3> v);
  int locate(Vec2 p, int start);
  int insert(Vec2 p, int hint);
  bool in_cavity(int t) const { return stamp_[static_cast<std::size_t>(t)] == epoch_; }

  int add_segment(int a, int b, int loop);
  void grid_add(int s);
  void segments_near(Vec2 p, double radius, std::vector<int> &out) const;
  bool find_edge(int a, int b, int &t, int &k) const;
  bool segment_encroached(int s) const;
  void split_segment(int s);
  void split_encroached_near(int v);
  void recover_segments();
  void label_regions(std::vector<int> &region) const;
  bool is_super(int v) const { return v < 3; }
};

void Refiner::init_super(Vec2 lo, Vec2 hi) {
  const Vec2 c = 0.5 * (lo + hi);
  const double span = std::max(hi.x - lo.x, hi.y - lo.y);
  const double s = 50.0 * span;
  pts_ = {{c.x - 2.0 * s, c.y - s}, {c.x + 2.0 * s, c.y - s}, {c.x, c.y + 2.0 * s}};
  vtri_ = {0, 0, 0};
  tris_.clear();
  alive_.clear();
  stamp_.clear();
  new_tri({0, 1, 2});
  tris_[0].nb = {-1, -1, -1};
  last_ = 0;
}

int Refiner::new_tri(std::array<int, 3> v) {
  int id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
    tris_[static_cast<std::size_t>(id)] = Tri{v, {-1, -1, -1}};
    alive_[static_cast<std::size_t>(id)] = 1;
  } else {
    id = static_cast<int>(tris_.size());
    tris_.push_back(Tri{v, {-1, -1, -1}});
    alive_.push_back(1);
    stamp_.push_back(0);
  }
  return id;
}

int Refiner::locate(Vec2 p, int start) {
  int t = (start >= 0 && alive_[static_cast<std::size_t>(start)]) ? start : last_;
  if (!alive_[static_cast<std::size_t>(t)]) {
    for (std::size_t i = 0; i < tris_.size(); ++i)
      if (alive_[i]) { t = static_cast<int>(i); break; }
  }
  for (std::size_t steps = 0; steps < 4 * tris_.size() + 64; ++steps) {
    const Tri &tr = tris_[static_cast<std::size_t>(t)];
    walk_seed_ = walk_seed_ * 1103515245u + 12345u;
    const int off = static_cast<int>((walk_seed_ >> 16) % 3u);
    int next = -2;
    for (int j = 0; j < 3; ++j) {
      const int i = (j + off) % 3;
      const Vec2 a = pts_[static_cast<std::size_t>(tr.v[(i + 1) % 3])];
      const Vec2 b = pts_[static_cast<std::size_t>(tr.v[(i + 2) % 3])];
      if (orient2d(a, b, p) < 0.0) {
        next = tr.nb[i];
        break;
      }
    }
    if (next == -2) return t;
    if (next == -1) throw Error("mesher: point outside the enclosing triangle");
    t = next;
  }
  throw Error("mesher: point location did not terminate");
}

int Refiner::insert(Vec2 p, int hint) {
  const int t0 = locate(p, hint);
  for (int i = 0; i < 3; ++i) {
    const int v = tris_[static_cast<std::size_t>(t0)].v[i];
    if (pts_[static_cast<std::size_t>(v)] == p) return v;
  }
  if (pts_.size() >= opts_.max_vertices)
    throw Error("mesher: vertex budget exhausted (geometry too fine or sliver input)");

  ++epoch_;
  std::vector<int> cavity{t0};
  stamp_[static_cast<std::size_t>(t0)] = epoch_;
  for (std::size_t head = 0; head < cavity.size(); ++head) {
    const Tri &tr = tris_[static_cast<std::size_t>(cavity[head])];
    for (int i = 0; i < 3; ++i) {
      const int n = tr.nb[i];
      if (n < 0 || in_cavity(n)) continue;
      const Tri &nt = tris_[static_cast<std::size_t>(n)];
      if (incircle(pts_[static_cast<std::size_t>(nt.v[0])], pts_[static_cast<std::size_t>(nt.v[1])],
                   pts_[static_cast<std::size_t>(nt.v[2])], p) > 0.0) {
        stamp_[static_cast<std::size_t>(n)] = epoch_;
        cavity.push_back(n);
      }
    }
  }

  struct Edge {
    int a, b, outer, outer_slot;
  };
  std::vector<Edge> boundary;
  for (bool grown = true; grown;) {
    grown = false;
    boundary.clear();
    for (int c : cavity) {
      const Tri &tr = tris_[static_cast<std::size_t>(c)];
      for (int i = 0; i < 3; ++i) {
        const int n = tr.nb[i];
        if (n >= 0 && in_cavity(n)) continue;
        const int a = tr.v[(i + 1) % 3];
        const int b = tr.v[(i + 2) % 3];
        if (orient2d(pts_[static_cast<std::size_t>(a)], pts_[static_cast<std::size_t>(b)], p) <= 0.0) {
          if (n < 0) throw Error("mesher: cavity reached the enclosing triangle");
          stamp_[static_cast<std::size_t>(n)] = epoch_;
          cavity.push_back(n);
          grown = true;
          break;
        }
        int slot = -1;
        if (n >= 0) {
          const Tri &nt = tris_[static_cast<std::size_t>(n)];
          for (int j = 0; j < 3; ++j)
            if (nt.nb[j] == c) slot = j;
        }
        boundary.push_back({a, b, n, slot});
      }
      if (grown) break;
    }
  }

  const int pid = static_cast<int>(pts_.size());
  pts_.push_back(p);
  vtri_.push_back(-1);

  for (int c : cavity) {
    alive_[static_cast<std::size_t>(c)] = 0;
    free_.push_back(c);
  }
  std::unordered_map<int, int> starts;  // boundary vertex a -> new triangle (p, a, b)
  std::unordered_map<int, int> ends;    // boundary vertex b -> new triangle (p, a, b)
  starts.reserve(boundary.size() * 2);
  ends.reserve(boundary.size() * 2);
  std::vector<int> created;
  created.reserve(boundary.size());
  for (const Edge &e : boundary) {
    const int t = new_tri({pid, e.a, e.b});
    tris_[static_cast<std::size_t>(t)].nb[0] = e.outer;
    if (e.outer >= 0) tris_[static_cast<std::size_t>(e.outer)].nb[e.outer_slot] = t;
    if (!starts.emplace(e.a, t).second || !ends.emplace(e.b, t).second)
      throw Error("mesher: non-manifold insertion cavity");
    created.push_back(t);
  }
  for (int t : created) {
    Tri &tr = tris_[static_cast<std::size_t>(t)];
    const auto s = starts.find(tr.v[2]);
    const auto e = ends.find(tr.v[1]);
    if (s == starts.end() || e == ends.end()) throw Error("mesher: open insertion cavity");
    tr.nb[1] = s->second;  // across edge (b, p)
    tr.nb[2] = e->second;  // across edge (p, a)
    for (int v : tr.v) vtri_[static_cast<std::size_t>(v)] = t;
  }
  last_ = created.front();
  return pid;
}

int Refiner::add_segment(int a, int b, int loop) {
  const int id = static_cast<int>(segs_.size());
  segs_.push_back({a, b, loop, true});
  seg_of_edge_[edge_key(a, b)] = id;
  grid_add(id);
  return id;
}

void Refiner::grid_add(int s) {
  const Segment &sg = segs_[static_cast<std::size_t>(s)];
  const Vec2 m = 0.5 * (pts_[static_cast<std::size_t>(sg.a)] + pts_[static_cast<std::size_t>(sg.b)]);
  const int ix = std::clamp(static_cast<int>((m.x - grid_origin_.x) / cell_), 0, gnx_ - 1);
  const int iy = std::clamp(static_cast<int>((m.y - grid_origin_.y) / cell_), 0, gny_ - 1);
  grid_[static_cast<std::size_t>(iy * gnx_ + ix)].push_back(s);
}

void Refiner::segments_near(Vec2 p, double radius, std::vector<int> &out) const {
  out.clear();
  const int r = static_cast<int>(std::ceil(radius / cell_)) + 1;
  const int cx = static_cast<int>(std::floor((p.x - grid_origin_.x) / cell_));
  const int cy = static_cast<int>(std::floor((p.y - grid_origin_.y) / cell_));
  for (int iy = std::max(0, cy - r); iy <= std::min(gny_ - 1, cy + r); ++iy)
    for (int ix = std::max(0, cx - r); ix <= std::min(gnx_ - 1, cx + r); ++ix)
      for (int s : grid_[static_cast<std::size_t>(iy * gnx_ + ix)])
        if (segs_[static_cast<std::size_t>(s)].alive) out.push_back(s);
}

bool Refiner::find_edge(int a, int b, int &t, int &k) const {
  const int start = vtri_[static_cast<std::size_t>(a)];
  int cur = start;
  for (int dir = 0; dir < 2; ++dir) {
    cur = start;
    for (std::size_t guard = 0; guard < 4096 && cur >= 0; ++guard) {
      const Tri &tr = tris_[static_cast<std::size_t>(cur)];
      int i = 0;
      while (tr.v[i] != a) ++i;
      const int n1 = tr.v[(i + 1) % 3];
      const int n2 = tr.v[(i + 2) % 3];
      if (n1 == b) { t = cur; k = (i + 2) % 3; return true; }
      if (n2 == b) { t = cur; k = (i + 1) % 3; return true; }
      cur = dir == 0 ? tr.nb[(i + 2) % 3] : tr.nb[(i + 1) % 3];
      if (cur == start) break;
    }
  }
  return false;
}

bool Refiner::segment_encroached(int s) const {
  const Segment &sg = segs_[static_cast<std::size_t>(s)];
  int t, k;
  if (!find_edge(sg.a, sg.b, t, k)) return true;  // missing: must be split
  const Vec2 a = pts_[static_cast<std::size_t>(sg.a)];
  const Vec2 b = pts_[static_cast<std::size_t>(sg.b)];
  const auto apex_inside = [&](int tri, int slot) {
    const int c = tris_[static_cast<std::size_t>(tri)].v[slot];
    if (is_super(c)) return false;
    const Vec2 pc = pts_[static_cast<std::size_t>(c)];
    return dot(pc - a, pc - b) < 0.0;
  };
  if (apex_inside(t, k)) return true;
  const int n = tris_[static_cast<std::size_t>(t)].nb[k];
  if (n < 0) return false;
  const Tri &nt = tris_[static_cast<std::size_t>(n)];
  for (int j = 0; j < 3; ++j)
    if (nt.v[j] != sg.a && nt.v[j] != sg.b) return apex_inside(n, j);
  return false;
}

void Refiner::split_segment(int s) {
  const Segment sg = segs_[static_cast<std::size_t>(s)];
  const Vec2 a = pts_[static_cast<std::size_t>(sg.a)];
  const Vec2 b = pts_[static_cast<std::size_t>(sg.b)];
  Vec2 m = 0.5 * (a + b);
  const PslgLoop &loop = loops_[static_cast<std::size_t>(sg.loop)];
  if (loop.circle) {
    const Vec2 d = m - loop.circle->center;
    const double r = norm(d);
    if (r > 0.0) m = loop.circle->center + (loop.circle->radius / r) * d;
  }
  if (distance(a, b) < 1e-12 * (max_seg_len_ + 1.0)) {
    std::ostringstream msg;
    msg << "mesher: segment (" << a.x << "," << a.y << ")-(" << b.x << "," << b.y
        << ") collapsed during refinement (sliver geometry)";
    throw Error(msg.str());
  }
  int t, k;
  const int hint = find_edge(sg.a, sg.b, t, k) ? t : -1;
  segs_[static_cast<std::size_t>(s)].alive = false;
  seg_of_edge_.erase(edge_key(sg.a, sg.b));
  const int p = insert(m, hint);
  add_segment(sg.a, p, sg.loop);
  add_segment(p, sg.b, sg.loop);
}

void Refiner::split_encroached_near(int v) {
  std::vector<int> stack{v};
  std::vector<int> near;
  while (!stack.empty()) {
    const int w = stack.back();
    stack.pop_back();
    segments_near(pts_[static_cast<std::size_t>(w)], 0.5 * max_seg_len_, near);
    for (int s : near) {
      if (!segs_[static_cast<std::size_t>(s)].alive) continue;
      if (segment_encroached(s)) {
        const std::size_t before = pts_.size();
        split_segment(s);
        if (pts_.size() > before) stack.push_back(static_cast<int>(pts_.size() - 1));
      }
    }
  }
}

void Refiner::recover_segments() {
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t s = 0; s < segs_.size(); ++s) {
      if (!segs_[s].alive) continue;
      if (segment_encroached(static_cast<int>(s))) {
        const std::size_t before = pts_.size();
        split_segment(static_cast<int>(s));
        if (pts_.size() > before) split_encroached_near(static_cast<int>(pts_.size() - 1));
        changed = true;
      }
    }
  }
}

void Refiner::label_regions(std::vector<int> &region) const {
  region.assign(tris_.size(), -1);
  std::vector<int> comp(tris_.size(), -1);
  int ncomp = 0;
  std::vector<int> queue;
  for (std::size_t s = 0; s < tris_.size(); ++s) {
    if (!alive_[s] || comp[s] >= 0) continue;
    queue.assign(1, static_cast<int>(s));
    comp[s] = ncomp;
    std::vector<int> members;
    bool touches_super = false;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int t = queue[head];
      members.push_back(t);
      const Tri &tr = tris_[static_cast<std::size_t>(t)];
      for (int i = 0; i < 3; ++i) {
        if (is_super(tr.v[i])) touches_super = true;
        const int n = tr.nb[i];
        if (n < 0 || comp[static_cast<std::size_t>(n)] >= 0) continue;
        if (seg_of_edge_.count(edge_key(tr.v[(i + 1) % 3], tr.v[(i + 2) % 3]))) continue;
        comp[static_cast<std::size_t>(n)] = ncomp;
        queue.push_back(n);
      }
    }
    int label = -1;
    if (!touches_super) {
      // Majority vote over a deterministic sample of member centroids.
      std::unordered_map<int, int> votes;
      const std::size_t stride = std::max<std::size_t>(1, members.size() / 101);
      for (std::size_t i = 0; i < members.size(); i += stride) {
        const Tri &tr = tris_[static_cast<std::size_t>(members[i])];
        const Vec2 c = (pts_[static_cast<std::size_t>(tr.v[0])] + pts_[static_cast<std::size_t>(tr.v[1])] +
                        pts_[static_cast<std::size_t>(tr.v[2])]) / 3.0;
        ++votes[opts_.classify(c)];
      }
      int best = 0;
      for (const auto &[lab, n] : votes)
        if (n > best || (n == best && lab < label)) { best = n; label = lab; }
    }
    for (int t : members) region[static_cast<std::size_t>(t)] = label;
    ++ncomp;
  }
}

RefinedTriangulation Refiner::run() {
  Vec2 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max()};
  Vec2 hi{-lo.x, -lo.y};
  for (const PslgLoop &l : loops_)
    for (const Vec2 &p : l.points) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
  init_super(lo, hi);

  for (const PslgLoop &l : loops_)
    for (std::size_t i = 0; i < l.points.size(); ++i)
      max_seg_len_ = std::max(max_seg_len_, distance(l.points[i], l.points[(i + 1) % l.points.size()]));
  cell_ = std::max(max_seg_len_, 1e-12);
  grid_origin_ = lo - Vec2{cell_, cell_};
  gnx_ = static_cast<int>((hi.x - lo.x) / cell_) + 3;
  gny_ = static_cast<int>((hi.y - lo.y) / cell_) + 3;
  grid_.assign(static_cast<std::size_t>(gnx_) * static_cast<std::size_t>(gny_), {});

  for (std::size_t li = 0; li < loops_.size(); ++li) {
    const PslgLoop &l = loops_[li];
    std::vector<int> ids;
    ids.reserve(l.points.size());
    for (const Vec2 &p : l.points) ids.push_back(insert(p, last_));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int a = ids[i];
      const int b = ids[(i + 1) % ids.size()];
      if (a == b) throw Error("mesher: duplicate consecutive boundary vertex");
      if (seg_of_edge_.count(edge_key(a, b))) throw Error("mesher: boundary loops overlap");
      add_segment(a, b, static_cast<int>(li));
    }
  }
  recover_segments();

  const double bound = opts_.max_radius_edge_ratio;
  std::vector<int> region;
  std::vector<int> near;
  for (int round = 0;; ++round) {
    if (round > 400) throw Error("mesher: refinement did not converge");
    label_regions(region);
    struct Bad {
      int t;
      std::array<int, 3> v;
    };
    std::vector<Bad> bad;
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (!alive_[t] || region[t] < 0) continue;
      const Tri &tr = tris_[t];
      const Vec2 a = pts_[static_cast<std::size_t>(tr.v[0])];
      const Vec2 b = pts_[static_cast<std::size_t>(tr.v[1])];
      const Vec2 c = pts_[static_cast<std::size_t>(tr.v[2])];
      const double la = distance(b, c), lb = distance(c, a), lc = distance(a, b);
      const double shortest = std::min({la, lb, lc});
      const double longest = std::max({la, lb, lc});
      const double area2 = std::abs(cross(b - a, c - a));
      const double circumradius = la * lb * lc / (2.0 * area2);
      const double hmax = opts_.max_edge(region[t]);
      // Quality splits stop at a floor so small input angles cannot cascade.
      const bool poor = circumradius > bound * shortest && shortest > opts_.min_edge_fraction * hmax;
      if (poor || longest > hmax)
        bad.push_back({static_cast<int>(t), tr.v});
    }
    if (bad.empty()) break;

    for (const Bad &bt : bad) {
      if (!alive_[static_cast<std::size_t>(bt.t)] || tris_[static_cast<std::size_t>(bt.t)].v != bt.v) continue;
      const Vec2 a = pts_[static_cast<std::size_t>(bt.v[0])];
      const Vec2 b = pts_[static_cast<std::size_t>(bt.v[1])];
      const Vec2 c = pts_[static_cast<std::size_t>(bt.v[2])];
      const Vec2 cc = circumcenter(a, b, c);
      segments_near(cc, 0.5 * max_seg_len_, near);
      bool encroaches = false;
      for (int s : near) {
        const Segment &sg = segs_[static_cast<std::size_t>(s)];
        const Vec2 sa = pts_[static_cast<std::size_t>(sg.a)];
        const Vec2 sb = pts_[static_cast<std::size_t>(sg.b)];
        if (dot(cc - sa, cc - sb) < 0.0) {
          encroaches = true;
          split_segment(s);
          split_encroached_near(static_cast<int>(pts_.size() - 1));
        }
      }
      if (encroaches) continue;
      const std::size_t before = pts_.size();
      const int v = insert(cc, bt.t);
      if (pts_.size() > before) split_encroached_near(v);
    }
  }

  // Compact: keep vertices used by meshed triangles.
  RefinedTriangulation out;
  std::vector<int> remap(pts_.size(), -1);
  for (std::size_t t = 0; t < tris_.size(); ++t) {
    if (!alive_[t] || region[t] < 0) continue;
    std::array<int, 3> tv{};
    for (int i = 0; i < 3; ++i) {
      int &r = remap[static_cast<std::size_t>(tris_[t].v[i])];
      if (r < 0) {
        r = static_cast<int>(out.vertices.size());
        out.vertices.push_back(pts_[static_cast<std::size_t>(tris_[t].v[i])]);
      }
      tv[i] = r;
    }
    out.triangles.push_back(tv);
    out.region.push_back(region[t]);
  }
  for (const Segment &s : segs_) {
    if (!s.alive) continue;
    const int a = remap[static_cast<std::size_t>(s.a)];
    const int b = remap[static_cast<std::size_t>(s.b)];
    if (a >= 0 && b >= 0) out.segments.push_back({a, b, s.loop});
  }
  return out;
}

}  // namespace

RefinedTriangulation refine_pslg(std::span<const PslgLoop> loops, const RefineOptions &opts) {
  if (!opts.classify || !opts.max_edge) throw Error("mesher: classify and max_edge callbacks are required");
  Refiner r(loops, opts);
  return r.run();
}

}  // namespace cloak::detail
