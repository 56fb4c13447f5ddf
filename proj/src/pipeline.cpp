#include "cloakopt/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>
#include <omp.h>
#include <openssl/evp.h>

#include "cloakopt/error.hpp"

namespace cloak {

const char *const kToolVersion = CLOAKOPT_VERSION;

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json &j, const std::string &where, std::initializer_list<const char *> allowed) {
  if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto &[key, value] : j.items())
    if (!ok.count(key)) throw Error("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class T>
T get(const json &j, const std::string &key, const std::string &where) {
  const std::string name = where.empty() ? key : where + "." + key;
  if (!j.contains(key)) throw Error("config: missing key '" + name + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception &) {
    throw Error("config: key '" + name + "' has the wrong type");
  }
}

template <class T>
T get_or(const json &j, const std::string &key, const std::string &where, T fallback) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

Vec2 get_vec(const json &j, const std::string &key, const std::string &where) {
  const auto v = get<std::vector<double>>(j, key, where);
  if (v.size() != 2) throw Error("config: key '" + where + "." + key + "' must have two entries");
  return {v[0], v[1]};
}

fs::path resolve(const fs::path &base, const std::string &p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

Contour load_contour(const fs::path &path, const std::string &key) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open '" + path.string() + "' (" + key + ")");
  try {
    return read_polyline(is);
  } catch (const Error &e) {
    throw Error(path.string() + ": " + e.what());
  }
}

double max_radius(const Contour &c) {
  double r = 0.0;
  for (const Vec2 &p : c.vertices) r = std::max(r, norm(p));
  if (c.circle) r = std::max(r, norm(c.circle->center) + c.circle->radius);
  return r;
}

// A length given either directly or as {"<unit>": factor}.
double scaled_length(const json &j, const std::string &key, const std::string &unit, double unit_value) {
  if (!j.contains(key)) throw Error("config: missing key '" + key + "'");
  const json &v = j.at(key);
  if (v.is_number()) return v.get<double>();
  check_keys(v, key, {unit.c_str()});
  return get<double>(v, unit, key) * unit_value;
}

std::string to_hex(const unsigned char *d, unsigned n) {
  std::ostringstream os;
  for (unsigned i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(d[i]);
  return os.str();
}

std::string sha256(const std::string &bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned n = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &n, EVP_sha256(), nullptr)) throw Error("sha256 failed");
  return to_hex(md, n);
}

std::string slurp(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

Contour read_polyline(std::istream &is) {
  std::vector<Vec2> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Vec2 p;
    if (!(ls >> p.x)) continue;
    std::string rest;
    if (!(ls >> p.y) || (ls >> rest)) throw Error("polyline: line " + std::to_string(lineno) + " is not 'x y'");
    pts.push_back(p);
  }
  if (pts.size() >= 2 && pts.front() == pts.back()) pts.pop_back();
  if (pts.size() < 3) throw Error("polyline: fewer than 3 vertices");
  return Contour::make_polygon(std::move(pts));
}

void write_polyline(std::ostream &os, const Contour &c) {
  os.precision(17);
  for (const Vec2 &p : c.vertices) os << p.x << ' ' << p.y << '\n';
}

void RunConfig::validate() const {
  domain.validate();
  medium.validate();
  ocp.validate();
  if (!(mesh.h_cloak > 0.0) || !(mesh.h_ambient > 0.0)) throw Error("config: mesh sizes must be positive");
  if (mesh.h_cloak > 0.5 * domain.cell_edge + 1e-15)
    throw Error("config: mesh.h_cloak exceeds half the cell edge");
  if (!(probe_radius > 0.0)) throw Error("config: probe.radius must be positive");
  if (n_theta < 8) throw Error("config: probe.n_theta must be at least 8");
  if (!(initial_amplitude >= 0.0)) throw Error("config: initial_amplitude must be nonnegative");
  if (constrained() && !fs::exists(feasible_set))
    throw Error("config: feasible_set file '" + feasible_set.string() + "' does not exist");
  for (const auto &t : tables)
    if (!fs::exists(t)) throw Error("config: table file '" + t.string() + "' does not exist");
  if (output_dir.empty()) throw Error("config: missing key 'output'");
}

RunConfig parse_run_config(const std::string &text, const fs::path &base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error &e) {
    throw Error(std::string("config: parse error: ") + e.what());
  }
  check_keys(j, "", {"name", "geometry", "outer_radius", "cell_edge", "medium", "frequencies", "mesh", "ocp",
                     "feasible_set", "tables", "probe", "output", "seed", "initial_amplitude"});
  RunConfig cfg;
  cfg.name = get_or<std::string>(j, "name", "", "run");

  if (j.contains("medium")) {
    const json &m = j.at("medium");
    check_keys(m, "medium", {"rho0", "kappa0"});
    cfg.medium.rho0 = get_or(m, "rho0", "medium", cfg.medium.rho0);
    cfg.medium.kappa0 = get_or(m, "kappa0", "medium", cfg.medium.kappa0);
  }
  cfg.medium.validate();

  const json geo = get<json>(j, "geometry", "");
  const auto kind = get<std::string>(geo, "type", "geometry");
  if (kind == "circle") {
    check_keys(geo, "geometry", {"type", "obstacle_radius", "cloak_radius", "segments"});
    const int segs = get_or(geo, "segments", "geometry", 128);
    cfg.domain.obstacle = Contour::make_circle({0, 0}, get<double>(geo, "obstacle_radius", "geometry"), segs);
    cfg.domain.cloak_outer = Contour::make_circle({0, 0}, get<double>(geo, "cloak_radius", "geometry"), segs);
  } else if (kind == "polyline") {
    check_keys(geo, "geometry", {"type", "obstacle", "cloak_outer"});
    cfg.domain.obstacle =
        load_contour(resolve(base_dir, get<std::string>(geo, "obstacle", "geometry")), "geometry.obstacle");
    cfg.domain.cloak_outer =
        load_contour(resolve(base_dir, get<std::string>(geo, "cloak_outer", "geometry")), "geometry.cloak_outer");
  } else {
    throw Error("config: geometry.type must be 'circle' or 'polyline'");
  }

  const auto freqs = get<json>(j, "frequencies", "");
  if (!freqs.is_array() || freqs.empty()) throw Error("config: 'frequencies' must be a nonempty list");
  for (std::size_t h = 0; h < freqs.size(); ++h) {
    const std::string where = "frequencies[" + std::to_string(h) + "]";
    const json &f = freqs[h];
    check_keys(f, where, {"wavelength", "hz", "direction"});
    const Vec2 dir = f.contains("direction") ? get_vec(f, "direction", where) : Vec2{1, 0};
    if (f.contains("wavelength") == f.contains("hz"))
      throw Error("config: " + where + " needs exactly one of 'wavelength' or 'hz'");
    try {
      cfg.ocp.frequencies.push_back(
          f.contains("hz") ? FrequencySpec::from_omega(2.0 * std::numbers::pi * get<double>(f, "hz", where), dir,
                                                       cfg.medium)
                           : FrequencySpec::from_wavelength(get<double>(f, "wavelength", where), dir, cfg.medium));
    } catch (const Error &e) {
      throw Error("config: " + where + ": " + e.what());
    }
  }
  double lambda_min = std::numeric_limits<double>::infinity();
  for (const auto &f : cfg.ocp.frequencies) lambda_min = std::min(lambda_min, f.wavelength());
  const double lambda1 = cfg.ocp.frequencies.front().wavelength();

  cfg.domain.outer_radius = scaled_length(j, "outer_radius", "cloak_factor", max_radius(cfg.domain.cloak_outer));
  cfg.domain.cell_edge = scaled_length(j, "cell_edge", "wavelengths", lambda1);

  const json mesh = get_or<json>(j, "mesh", "", json::object());
  check_keys(mesh, "mesh", {"h_ambient", "h_ambient_wavelengths", "h_cloak", "h_cloak_cell_edges", "quality"});
  cfg.mesh.h_ambient = mesh.contains("h_ambient") ? get<double>(mesh, "h_ambient", "mesh")
                                                  : get_or(mesh, "h_ambient_wavelengths", "mesh", 0.1) * lambda_min;
  cfg.mesh.h_cloak = mesh.contains("h_cloak")
                         ? get<double>(mesh, "h_cloak", "mesh")
                         : get_or(mesh, "h_cloak_cell_edges", "mesh", 0.5) * cfg.domain.cell_edge;
  cfg.mesh.quality = get_or(mesh, "quality", "mesh", cfg.mesh.quality);

  const json ocp = get_or<json>(j, "ocp", "", json::object());
  check_keys(ocp, "ocp", {"lambda_v", "lambda_u", "max_iter", "grad_tol", "grad_rtol", "armijo_c1", "armijo_shrink",
                          "tau0", "max_halvings", "bb_warm_start", "use_laplacian"});
  OcpConfig &oc = cfg.ocp;
  oc.lambda_v = get_or(ocp, "lambda_v", "ocp", oc.lambda_v);
  oc.lambda_u = get_or(ocp, "lambda_u", "ocp", oc.lambda_u);
  oc.max_iter = get_or(ocp, "max_iter", "ocp", oc.max_iter);
  oc.grad_tol = get_or(ocp, "grad_tol", "ocp", oc.grad_tol);
  oc.grad_rtol = get_or(ocp, "grad_rtol", "ocp", oc.grad_rtol);
  oc.armijo_c1 = get_or(ocp, "armijo_c1", "ocp", oc.armijo_c1);
  oc.armijo_shrink = get_or(ocp, "armijo_shrink", "ocp", oc.armijo_shrink);
  oc.tau0 = get_or(ocp, "tau0", "ocp", oc.tau0);
  oc.max_halvings = get_or(ocp, "max_halvings", "ocp", oc.max_halvings);
  oc.bb_warm_start = get_or(ocp, "bb_warm_start", "ocp", oc.bb_warm_start);
  oc.use_laplacian = get_or(ocp, "use_laplacian", "ocp", oc.use_laplacian);

  const auto fset = get_or<std::string>(j, "feasible_set", "", "unconstrained");
  if (fset != "unconstrained") cfg.feasible_set = resolve(base_dir, fset);
  for (const auto &t : get_or<std::vector<std::string>>(j, "tables", "", {}))
    cfg.tables.push_back(resolve(base_dir, t));

  const json probe = get<json>(j, "probe", "");
  check_keys(probe, "probe", {"radius", "n_theta", "center"});
  cfg.probe_radius = get<double>(probe, "radius", "probe");
  cfg.n_theta = get_or(probe, "n_theta", "probe", cfg.n_theta);
  if (probe.contains("center")) cfg.probe_center = get_vec(probe, "center", "probe");

  cfg.output_dir = resolve(base_dir, get<std::string>(j, "output", ""));
  cfg.seed = get_or<std::uint64_t>(j, "seed", "", 0);
  cfg.initial_amplitude = get_or(j, "initial_amplitude", "", 0.0);
  cfg.hash = sha256(text);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path &path) {
  std::string text;
  try {
    text = slurp(path);
  } catch (const Error &) {
    throw Error("config: cannot read '" + path.string() + "'");
  }
  RunConfig cfg = parse_run_config(text, path.parent_path());
  cfg.source = path;
  return cfg;
}

Workspace prepare_workspace(const RunConfig &cfg, bool assemble) {
  Workspace ws;
  ws.hexes = generate_hex_partition(cfg.domain);
  ws.mesh = build_mesh(cfg.domain, ws.hexes, cfg.mesh);
  ws.part = assign_cells(ws.mesh, ws.hexes);
  ws.part.validate(ws.mesh);
  if (assemble)
    for (const auto &f : cfg.ocp.frequencies) ws.ops.push_back(assemble_constants(ws.mesh, ws.part, cfg.medium, f));
  return ws;
}

ControlSet load_control_set(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open feasible set '" + path.string() + "'");
  try {
    const FeasibleSet set = read_feasible_set(is);
    set.validate();
    return to_control_space(set);
  } catch (const Error &e) {
    throw Error(path.string() + ": " + e.what());
  }
}

ControlState initial_controls(const RunConfig &cfg, std::size_t num_cells) {
  ControlState c = ControlState::zeros(num_cells);
  if (cfg.initial_amplitude == 0.0) return c;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-cfg.initial_amplitude, cfg.initial_amplitude);
  for (std::size_t k = 0; k < num_cells; ++k) {
    c.v[static_cast<Eigen::Index>(k)] = dist(rng);
    c.u[static_cast<Eigen::Index>(k)] = dist(rng);
  }
  return c;
}

int count_violations(const ControlState &ctrl, const FeasibleSet &set) {
  const ControlSet cs = to_control_space(set);
  int bad = 0;
  for (Eigen::Index k = 0; k < ctrl.v.size(); ++k) {
    const double rho = std::exp(ctrl.v[k]), kappa = std::exp(ctrl.u[k]);
    if (!(rho > 0.0 && kappa > 0.0) || !cs.contains({std::log(rho), std::log(kappa)}, 1e-9)) ++bad;
  }
  return bad;
}

RunSummary run_optimization(const RunConfig &cfg, const Workspace &ws, const IterationCallback &callback) {
  OcpProblem problem(ws.ops, ws.part, cfg.ocp);
  std::optional<ControlSet> set;
  if (cfg.constrained()) set = load_control_set(cfg.feasible_set);
  RunSummary out;
  out.result = steepest_descent(problem, initial_controls(cfg, ws.part.num_cells), set ? &*set : nullptr, callback);
  const auto bare = problem.evaluate(ControlState::zeros(ws.part.num_cells));
  const FieldEvaluator eval(ws.mesh);
  for (std::size_t h = 0; h < bare.sols.size(); ++h) {
    out.bare_fields.push_back(bare.sols[h].p);
    out.reductions.push_back(intensity_reduction(eval, out.result.sols[h].p, bare.sols[h].p, cfg.probe_center,
                                                 cfg.probe_radius, cfg.n_theta));
  }
  if (set) out.feasibility_violations = count_violations(out.result.ctrl, from_control_space(*set));
  return out;
}

ControlState read_controls(std::istream &is) {
  std::vector<double> v, u;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long k = -1;
    double vk = 0, uk = 0;
    if (!(ls >> k >> vk >> uk) || k != static_cast<long>(v.size()))
      throw Error("controls: malformed line " + std::to_string(lineno));
    v.push_back(vk);
    u.push_back(uk);
  }
  if (v.empty()) throw Error("controls: no entries");
  ControlState c;
  c.v = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  c.u = Eigen::Map<Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  return c;
}

std::string file_sha256(const fs::path &path) { return sha256(slurp(path)); }

namespace {

// Records every artifact written by a command and maintains manifest.json.
class ArtifactWriter {
 public:
  ArtifactWriter(const RunConfig &cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {
    fs::create_directories(cfg.output_dir);
    record("incomplete", "running");
  }

  void write(const std::string &name, const std::function<void(std::ostream &)> &fn) {
    const fs::path path = cfg_.output_dir / name;
    {
      std::ofstream os(path);
      if (!os) throw Error("cannot write '" + path.string() + "'");
      fn(os);
      if (!os) throw Error("write failed: '" + path.string() + "'");
    }
    artifacts_.push_back(name);
    record("incomplete", "running");
  }

  void finish(const std::string &status, const std::string &message) { record(status, message); }

 private:
  void record(const std::string &status, const std::string &message) {
    const fs::path mpath = cfg_.output_dir / "manifest.json";
    json m = json::object();
    if (fs::exists(mpath)) {
      try {
        m = json::parse(slurp(mpath));
      } catch (const std::exception &) {
        m = json::object();
      }
    }
    m["tool"] = "cloakopt";
    m["version"] = kToolVersion;
    m["config"] = cfg_.source.string();
    m["config_hash"] = cfg_.hash;
    m["seed"] = cfg_.seed;
    json arts = json::array();
    for (const auto &a : artifacts_) {
      const fs::path p = cfg_.output_dir / a;
      arts.push_back({{"path", a}, {"bytes", fs::file_size(p)}, {"sha256", file_sha256(p)}});
    }
    m["commands"][command_] = {{"status", status}, {"message", message}, {"artifacts", arts}};
    std::ofstream os(mpath);
    os << m.dump(2) << '\n';
  }

  const RunConfig &cfg_;
  std::string command_;
  std::vector<std::string> artifacts_;
};

std::string freq_suffix(std::size_t h) { return "_f" + std::to_string(h) + ".txt"; }

void write_hexagons(std::ostream &os, const std::vector<Hexagon> &hexes) {
  os.precision(17);
  os << "# cell cx cy i j edge\n";
  for (std::size_t k = 0; k < hexes.size(); ++k)
    os << k << ' ' << hexes[k].center.x << ' ' << hexes[k].center.y << ' ' << hexes[k].i << ' ' << hexes[k].j << ' '
       << hexes[k].edge << '\n';
}

void cmd_mesh(const RunConfig &cfg, ArtifactWriter &aw, std::ostream &log) {
  const Workspace ws = prepare_workspace(cfg, false);
  aw.write("mesh.txt", [&](std::ostream &os) { write_mesh(os, ws.mesh); });
  aw.write("partition.txt", [&](std::ostream &os) { write_partition(os, ws.part); });
  aw.write("hexagons.txt", [&](std::ostream &os) { write_hexagons(os, ws.hexes); });
  log << "mesh: " << ws.mesh.num_triangles() << " triangles, " << ws.mesh.num_nodes() << " nodes, "
      << ws.part.num_cells << " cells\n";
}

void cmd_forward(const RunConfig &cfg, ArtifactWriter &aw, std::ostream &log) {
  const Workspace ws = prepare_workspace(cfg);
  const FieldEvaluator eval(ws.mesh);
  const ControlState zero = ControlState::zeros(ws.part.num_cells);
  json summary = json::array();
  for (std::size_t h = 0; h < ws.ops.size(); ++h) {
    Factorization fact;
    const FieldSolution sol = solve_frequency(ws.ops[h], zero, fact);
    const IntensityProfile prof =
        intensity_profile(eval, sol.p, cfg.probe_center, cfg.probe_radius, cfg.n_theta);
    aw.write("field_bare" + freq_suffix(h), [&](std::ostream &os) { write_field(os, ws.mesh, sol.p); });
    aw.write("intensity_bare" + freq_suffix(h), [&](std::ostream &os) { write_intensity(os, prof); });
    summary.push_back({{"wavelength", ws.ops[h].freq.wavelength()}, {"mean_dB", prof.mean_dB()},
                       {"residual", sol.residual}});
    log << "forward f" << h << ": mean Delta " << prof.mean_dB() << " dB, residual " << sol.residual << "\n";
  }
  aw.write("forward.json", [&](std::ostream &os) { os << summary.dump(2) << '\n'; });
}

void cmd_optimize(const RunConfig &cfg, ArtifactWriter &aw, std::ostream &log) {
  const Workspace ws = prepare_workspace(cfg);
  log << "optimize: " << ws.part.num_cells << " cells, " << ws.mesh.num_nodes() << " dofs, "
      << cfg.ocp.frequencies.size() << " frequencies\n";
  const RunSummary run = run_optimization(cfg, ws, [&](const TraceEntry &e) {
    log << "iter " << e.iter << " J " << e.J << " |g| " << e.grad_norm << " tau " << e.tau << "\n";
  });
  const OcpResult &res = run.result;
  aw.write("controls.txt", [&](std::ostream &os) { write_controls(os, res.ctrl); });
  aw.write("trace.txt", [&](std::ostream &os) { write_trace(os, res.trace); });
  json freqs = json::array();
  for (std::size_t h = 0; h < run.reductions.size(); ++h) {
    const auto &r = run.reductions[h];
    aw.write("field_bare" + freq_suffix(h), [&](std::ostream &os) { write_field(os, ws.mesh, run.bare_fields[h]); });
    aw.write("field_cloaked" + freq_suffix(h), [&](std::ostream &os) { write_field(os, ws.mesh, res.sols[h].p); });
    aw.write("intensity_bare" + freq_suffix(h), [&](std::ostream &os) { write_intensity(os, r.bare); });
    aw.write("intensity_cloaked" + freq_suffix(h), [&](std::ostream &os) { write_intensity(os, r.cloaked); });
    freqs.push_back({{"wavelength", cfg.ocp.frequencies[h].wavelength()},
                     {"direction", {cfg.ocp.frequencies[h].direction.x, cfg.ocp.frequencies[h].direction.y}},
                     {"mean_bare_dB", r.bare.mean_dB()},
                     {"mean_cloaked_dB", r.cloaked.mean_dB()},
                     {"mean_reduction_dB", r.mean_reduction_dB}});
    log << "f" << h << ": mean reduction " << r.mean_reduction_dB << " dB\n";
  }
  const json summary = {{"name", cfg.name},
                        {"cells", ws.part.num_cells},
                        {"dofs", ws.mesh.num_nodes()},
                        {"constrained", cfg.constrained()},
                        {"J0", res.J0},
                        {"J", res.J},
                        {"iterations", res.iterations},
                        {"stop_reason", res.stop_reason},
                        {"armijo_replay_ok", res.trace.armijo_replay_ok(cfg.ocp.armijo_c1)},
                        {"feasibility_violations", run.feasibility_violations},
                        {"frequencies", freqs}};
  aw.write("summary.json", [&](std::ostream &os) { os << summary.dump(2) << '\n'; });
}

std::vector<HomogenizationTable> load_tables(const RunConfig &cfg) {
  if (cfg.tables.empty()) throw Error("config: 'tables' is required for inversion");
  std::vector<HomogenizationTable> out;
  for (const auto &p : cfg.tables) {
    std::ifstream is(p);
    if (!is) throw Error("cannot open table '" + p.string() + "'");
    try {
      out.push_back(read_table(is));
    } catch (const Error &e) {
      throw Error(p.string() + ": " + e.what());
    }
  }
  return out;
}

ControlState load_controls(const RunConfig &cfg) {
  const fs::path path = cfg.output_dir / "controls.txt";
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path.string() + "' (run optimize first)");
  try {
    return read_controls(is);
  } catch (const Error &e) {
    throw Error(path.string() + ": " + e.what());
  }
}

FeasibleSet inversion_set(const RunConfig &cfg, const std::vector<HomogenizationTable> &tables) {
  if (cfg.constrained()) return from_control_space(load_control_set(cfg.feasible_set));
  std::vector<FeasibleSet> parts;
  for (const auto &t : tables) parts.push_back(trace_feasible_boundary(t));
  return union_sets(parts);
}

void cmd_invert(const RunConfig &cfg, ArtifactWriter &aw, std::ostream &log) {
  const auto tables = load_tables(cfg);
  const ControlState ctrl = load_controls(cfg);
  const ControlSet set = to_control_space(inversion_set(cfg, tables));
  int projected = 0;
  double worst = 0.0;
  std::ostringstream body;
  body.precision(12);
  body << "# cell family param1 param2 rho_target kappa_target rho_hat kappa_hat residual projected\n";
  for (Eigen::Index k = 0; k < ctrl.v.size(); ++k) {
    const Vec2 vu{ctrl.v[k], ctrl.u[k]};
    const Vec2 q = set.project(vu);
    const bool moved = !(q == vu);
    projected += moved;
    const Vec2 target{std::exp(q.x), std::exp(q.y)};
    const InversionResult r = invert_cell(target, tables);
    worst = std::max(worst, r.residual);
    body << k << ' ' << family_name(r.family) << ' ' << r.param1 << ' ' << r.param2 << ' ' << target.x << ' '
         << target.y << ' ' << r.rho_hat << ' ' << r.kappa_hat << ' ' << r.residual << ' ' << moved << '\n';
  }
  aw.write("cells.txt", [&](std::ostream &os) { os << body.str(); });
  log << "invert: " << ctrl.v.size() << " cells, " << projected << " projected onto S, worst residual " << worst
      << "\n";
}

void cmd_report(const RunConfig &cfg, ArtifactWriter &aw, std::ostream &log) {
  const fs::path spath = cfg.output_dir / "summary.json";
  json summary;
  try {
    summary = json::parse(slurp(spath));
  } catch (const std::exception &) {
    throw Error("cannot read '" + spath.string() + "' (run optimize first)");
  }
  const ControlState ctrl = load_controls(cfg);
  json report = {{"name", cfg.name},
                 {"iterations", summary.value("iterations", -1)},
                 {"stop_reason", summary.value("stop_reason", "")},
                 {"J0", summary.value("J0", 0.0)},
                 {"J", summary.value("J", 0.0)},
                 {"frequencies", summary.value("frequencies", json::array())}};
  if (cfg.constrained()) {
    const int bad = count_violations(ctrl, from_control_space(load_control_set(cfg.feasible_set)));
    report["feasibility_violations"] = bad;
  } else {
    report["feasibility_violations"] = nullptr;
  }
  const fs::path cells = cfg.output_dir / "cells.txt";
  if (fs::exists(cells)) {
    std::ifstream is(cells);
    std::string line;
    double worst = 0.0;
    int n = 0;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string fam;
      double skip, res;
      int k;
      if (ls >> k >> fam >> skip >> skip >> skip >> skip >> skip >> skip >> res) {
        worst = std::max(worst, res);
        ++n;
      }
    }
    report["inverted_cells"] = n;
    report["worst_inversion_residual"] = worst;
  }
  aw.write("report.json", [&](std::ostream &os) { os << report.dump(2) << '\n'; });
  log << "report " << cfg.name << ": " << report["iterations"] << " iterations, J " << report["J0"] << " -> "
      << report["J"] << "\n";
  for (const auto &f : report["frequencies"])
    log << "  wavelength " << f.value("wavelength", 0.0) << ": mean reduction " << f.value("mean_reduction_dB", 0.0)
        << " dB\n";
  log << "  feasibility violations: " << report["feasibility_violations"] << "\n";
}

}  // namespace

int run_command(const CommandOptions &opts, std::ostream &log, std::ostream &err) {
  static const std::map<std::string, void (*)(const RunConfig &, ArtifactWriter &, std::ostream &)> commands = {
      {"mesh", cmd_mesh}, {"forward", cmd_forward}, {"optimize", cmd_optimize},
      {"invert", cmd_invert}, {"report", cmd_report}};
  const auto it = commands.find(opts.command);
  if (it == commands.end()) {
    err << "unknown command '" << opts.command << "'\n";
    return 2;
  }
  RunConfig cfg;
  try {
    cfg = load_run_config(opts.config);
    if (opts.out) cfg.output_dir = *opts.out;
    if (opts.seed) cfg.seed = *opts.seed;
  } catch (const std::exception &e) {
    err << e.what() << "\n";
    return 1;
  }
  if (opts.threads) {
    if (*opts.threads < 1) {
      err << "--threads must be positive\n";
      return 1;
    }
    omp_set_num_threads(*opts.threads);
  }
  std::optional<ArtifactWriter> aw;
  try {
    aw.emplace(cfg, opts.command);
    it->second(cfg, *aw, log);
    aw->finish("complete", "");
  } catch (const std::exception &e) {
    err << opts.command << ": " << e.what() << "\n";
    if (aw) aw->finish("incomplete", e.what());
    return 1;
  }
  return 0;
}

}  // namespace cloak
