#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cloakopt/error.hpp"
#include "cloakopt/feasible_set.hpp"

namespace fs = std::filesystem;
using namespace cloak;

namespace {

void write_file(const fs::path &path, const auto &writer) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  writer(os);
  if (!os) throw Error("write failed: " + path.string());
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Synthetic homogenization tables and the feasible set traced from them"};
  fs::path out = "data";
  int n = 41;
  CylinderConstraints cyl;
  StarConstraints star;
  star.p_min = 0.3;
  star.P_max = 0.666;
  app.add_option("--out", out, "output directory");
  app.add_option("--samples", n, "grid samples per logical direction")->check(CLI::Range(2, 100000));
  app.add_option("--delta-r2", cyl.delta_r2, "cylinder minimum ring thickness / l");
  app.add_option("--delta-r1", cyl.delta_r1, "cylinder minimum core radius / l");
  app.add_option("--p-min", star.p_min, "star minimum valley radius / l");
  app.add_option("--P-max", star.P_max, "star maximum tip radius / l");
  app.add_option("--points", star.n_points, "star points (multiple of 3)");
  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out);
    const auto tc = synthetic_cylinder_table(cyl, n, n);
    const auto ts = synthetic_star_table(star, n, n);
    const auto set = union_sets({trace_feasible_boundary(tc), trace_feasible_boundary(ts)});
    write_file(out / "table_cylinder.txt", [&](std::ostream &os) { write_table(os, tc); });
    write_file(out / "table_star.txt", [&](std::ostream &os) { write_table(os, ts); });
    write_file(out / "feasible_set.txt", [&](std::ostream &os) { write_feasible_set(os, set); });
    std::size_t vertices = 0;
    for (const auto &loop : set.loops) vertices += loop.size();
    std::cout << "wrote " << set.loops.size() << " loops, " << vertices << " vertices to " << out << "\n";
  } catch (const std::exception &e) {
    std::cerr << "make_tables: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
