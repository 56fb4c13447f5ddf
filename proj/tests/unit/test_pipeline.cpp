#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <unistd.h>

#include "cloakopt/error.hpp"
#include "cloakopt/pipeline.hpp"

using namespace cloak;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = CLOAKOPT_DATA_DIR;
const fs::path kConfigs = CLOAKOPT_CONFIG_DIR;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &tag)
      : path(fs::temp_directory_path() / ("cloakopt_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

json tiny_config(const fs::path &out) {
  return {{"name", "tiny"},
          {"geometry", {{"type", "circle"}, {"obstacle_radius", 0.3}, {"cloak_radius", 0.62}, {"segments", 48}}},
          {"outer_radius", 1.1},
          {"cell_edge", 0.1},
          {"frequencies", {{{"wavelength", 1.2}, {"direction", {1, 0}}}}},
          {"mesh", {{"h_ambient", 0.12}, {"h_cloak_cell_edges", 0.5}}},
          {"ocp", {{"max_iter", 3}}},
          {"feasible_set", "unconstrained"},
          {"tables", {(kData / "table_cylinder.txt").string(), (kData / "table_star.txt").string()}},
          {"probe", {{"radius", 0.9}, {"n_theta", 64}}},
          {"output", out.string()},
          {"seed", 5},
          {"initial_amplitude", 0.1}};
}

fs::path write_config(const fs::path &dir, const json &j, const std::string &name = "run.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

int run(const std::string &cmd, const fs::path &cfg, std::string *err_text = nullptr) {
  std::ostringstream log, err;
  CommandOptions o;
  o.command = cmd;
  o.config = cfg;
  const int rc = run_command(o, log, err);
  if (err_text) *err_text = err.str();
  return rc;
}

std::string slurp(const fs::path &p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string config_error(const json &j) {
  try {
    parse_run_config(j.dump(), ".");
  } catch (const Error &e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("polyline files") {
  std::istringstream ok("# hull\n0 0\n1 0  # corner\n\n1 1\n0 0\n");
  const Contour c = read_polyline(ok);
  CHECK(c.size() == 3);
  CHECK(c.area() == doctest::Approx(0.5));
  std::istringstream bad("0 0\n1\n1 1\n");
  CHECK_THROWS_WITH_AS(read_polyline(bad), "polyline: line 2 is not 'x y'", Error);
  std::istringstream few("0 0\n1 1\n");
  CHECK_THROWS_AS(read_polyline(few), Error);
  std::ostringstream os;
  write_polyline(os, c);
  std::istringstream back(os.str());
  CHECK(read_polyline(back).vertices == c.vertices);
}

TEST_CASE("config values are resolved relative to wavelengths and the file") {
  const json j = tiny_config("out");
  json k = j;
  k["cell_edge"] = {{"wavelengths", 0.087}};
  k["outer_radius"] = {{"cloak_factor", 2.0}};
  k["mesh"] = {{"h_ambient_wavelengths", 0.1}};
  k["frequencies"].push_back({{"wavelength", 0.9}, {"direction", {0, 2}}});
  const RunConfig cfg = parse_run_config(k.dump(), "/base/dir");
  CHECK(cfg.domain.cell_edge == doctest::Approx(0.087 * 1.2));
  CHECK(cfg.domain.outer_radius == doctest::Approx(1.24));
  CHECK(cfg.mesh.h_ambient == doctest::Approx(0.09));
  CHECK(cfg.mesh.h_cloak == doctest::Approx(0.5 * 0.087 * 1.2));
  CHECK(cfg.ocp.frequencies[1].direction.y == doctest::Approx(1.0));
  CHECK(cfg.output_dir == fs::path("/base/dir/out"));
  CHECK_FALSE(cfg.constrained());
  CHECK(cfg.hash.size() == 64);
  CHECK(cfg.hash == parse_run_config(k.dump(), "/elsewhere").hash);
}

TEST_CASE("config errors name the key at fault") {
  const json j = tiny_config("out");
  json k = j;
  k.erase("probe");
  CHECK(config_error(k) == "config: missing key 'probe'");
  k = j;
  k["ocp"]["max_iters"] = 3;
  CHECK(config_error(k) == "config: unknown key 'ocp.max_iters'");
  k = j;
  k["frequencies"][0]["hz"] = 100.0;
  CHECK(config_error(k) == "config: frequencies[0] needs exactly one of 'wavelength' or 'hz'");
  k = j;
  k["frequencies"] = json::array();
  CHECK(config_error(k) == "config: 'frequencies' must be a nonempty list");
  k = j;
  k["probe"]["radius"] = "far";
  CHECK(config_error(k) == "config: key 'probe.radius' has the wrong type");
  k = j;
  k["feasible_set"] = "/nonexistent/set.txt";
  CHECK(config_error(k).find("feasible_set") != std::string::npos);
  k = j;
  k["mesh"] = {{"h_ambient", 0.12}, {"h_cloak", 0.2}};
  CHECK(config_error(k) == "config: mesh.h_cloak exceeds half the cell edge");
  std::string parse_msg;
  try {
    parse_run_config("[1, 2", ".");
  } catch (const Error &e) {
    parse_msg = e.what();
  }
  CHECK(parse_msg.rfind("config: parse error", 0) == 0);
}

TEST_CASE("frequencies given in hertz use the configured sound speed") {
  json k = tiny_config("out");
  k["frequencies"] = {{{"hz", 50.0}}};
  k["cell_edge"] = 0.1;
  const RunConfig cfg = parse_run_config(k.dump(), ".");
  CHECK(cfg.ocp.frequencies[0].wavelength() == doctest::Approx(cfg.medium.c0() / 50.0).epsilon(1e-12));
}

TEST_CASE("bundled configurations load") {
  for (const char *name : {"circle_unconstrained", "circle_projected", "ship_two_frequency"}) {
    CAPTURE(name);
    const RunConfig cfg = load_run_config(kConfigs / (std::string(name) + ".json"));
    CHECK(cfg.name == name);
    CHECK(cfg.domain.cell_edge == doctest::Approx(0.087 * cfg.ocp.frequencies[0].wavelength()));
  }
  const RunConfig ship = load_run_config(kConfigs / "ship_two_frequency.json");
  REQUIRE(ship.ocp.frequencies.size() == 2);
  CHECK(ship.ocp.frequencies[0].direction == Vec2{1, 0});
  CHECK(ship.ocp.frequencies[1].direction == Vec2{0, 1});
  CHECK(ship.ocp.frequencies[0].wavelength() == doctest::Approx(0.204));
  CHECK(ship.ocp.frequencies[1].wavelength() == doctest::Approx(0.189));
  CHECK(ship.constrained());
  CHECK_FALSE(load_run_config(kConfigs / "circle_unconstrained.json").constrained());
}

TEST_CASE("identical config and seed give bit-identical controls and traces") {
  TempDir tmp("determinism");
  const fs::path a = tmp.path / "a", b = tmp.path / "b";
  CHECK(run("optimize", write_config(tmp.path, tiny_config(a), "a.json")) == 0);
  CHECK(run("optimize", write_config(tmp.path, tiny_config(b), "b.json")) == 0);
  CHECK(slurp(a / "controls.txt") == slurp(b / "controls.txt"));
  CHECK(slurp(a / "trace.txt") == slurp(b / "trace.txt"));
  json other = tiny_config(tmp.path / "c");
  other["seed"] = 6;
  CHECK(run("optimize", write_config(tmp.path, other, "c.json")) == 0);
  CHECK(slurp(a / "controls.txt") != slurp(tmp.path / "c" / "controls.txt"));
}

TEST_CASE("optimize with no iterations leaves the bare field") {
  TempDir tmp("zero_iter");
  json j = tiny_config(tmp.path / "out");
  j["ocp"]["max_iter"] = 0;
  j["initial_amplitude"] = 0.0;
  const fs::path cfg = write_config(tmp.path, j);
  REQUIRE(run("optimize", cfg) == 0);
  CHECK(slurp(tmp.path / "out" / "field_bare_f0.txt") == slurp(tmp.path / "out" / "field_cloaked_f0.txt"));
  const json s = json::parse(slurp(tmp.path / "out" / "summary.json"));
  CHECK(s["iterations"] == 0);
  CHECK(s["frequencies"][0]["mean_reduction_dB"].get<double>() == 0.0);
}

TEST_CASE("projected pipeline end to end") {
  TempDir tmp("projected");
  json j = tiny_config(tmp.path / "out");
  j["feasible_set"] = (kData / "feasible_set.txt").string();
  j["initial_amplitude"] = 1.0;
  const fs::path cfg = write_config(tmp.path, j);
  for (const std::string cmd : {"mesh", "forward", "optimize", "invert", "report"}) {
    CAPTURE(cmd);
    std::string err;
    CHECK(run(cmd, cfg, &err) == 0);
    CHECK(err == "");
  }
  const fs::path out = tmp.path / "out";
  const json report = json::parse(slurp(out / "report.json"));
  CHECK(report["feasibility_violations"] == 0);
  CHECK(report["inverted_cells"].get<int>() > 0);
  CHECK(report["worst_inversion_residual"].get<double>() < 1e-3);

  const json m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["config_hash"] == file_sha256(cfg));
  CHECK(m["seed"] == 5);
  CHECK(m["version"] == kToolVersion);
  for (const std::string cmd : {"mesh", "forward", "optimize", "invert", "report"}) {
    CAPTURE(cmd);
    const json &c = m["commands"][cmd];
    CHECK(c["status"] == "complete");
    CHECK_FALSE(c["artifacts"].empty());
    for (const auto &a : c["artifacts"]) {
      const fs::path p = out / a["path"].get<std::string>();
      REQUIRE(fs::exists(p));
      CHECK(a["bytes"].get<std::uintmax_t>() == fs::file_size(p));
      CHECK(a["sha256"] == file_sha256(p));
    }
  }
  std::ifstream cs(out / "controls.txt");
  const ControlState ctrl = read_controls(cs);
  std::ifstream fs_in(kData / "feasible_set.txt");
  CHECK(count_violations(ctrl, read_feasible_set(fs_in)) == 0);
}

TEST_CASE("failed commands are marked incomplete") {
  TempDir tmp("failure");
  const fs::path cfg = write_config(tmp.path, tiny_config(tmp.path / "out"));
  std::string err;
  CHECK(run("invert", cfg, &err) == 1);
  CHECK(err.find("controls.txt") != std::string::npos);
  const json m = json::parse(slurp(tmp.path / "out" / "manifest.json"));
  CHECK(m["commands"]["invert"]["status"] == "incomplete");
  CHECK(m["commands"]["invert"]["artifacts"].empty());
  CHECK(run("report", cfg) == 1);
  CHECK(run("bogus", cfg) == 2);
  CHECK(run("mesh", tmp.path / "missing.json", &err) == 1);
  CHECK(err.find("missing.json") != std::string::npos);
}

TEST_CASE("controls file round trip") {
  ControlState c = ControlState::zeros(3);
  c.v << 0.1, -1.0 / 3.0, 2.0;
  c.u << -0.5, 1e-17, std::acos(-1.0);
  std::ostringstream os;
  write_controls(os, c);
  std::istringstream is(os.str());
  CHECK(read_controls(is) == c);
  std::istringstream bad("0 0.1 0.2 1 1\n2 0.1 0.2 1 1\n");
  CHECK_THROWS_WITH_AS(read_controls(bad), "controls: malformed line 2", Error);
}
