#include <iostream>

#include <CLI11.hpp>

#include "cloakopt/pipeline.hpp"

int main(int argc, char **argv) {
  CLI::App app{"Acoustic cloak design: mesh, forward solve, optimize, invert cells, report"};
  app.set_version_flag("--version", cloak::kToolVersion);
  app.require_subcommand(1);

  cloak::CommandOptions opts;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  const auto add = [&](const char *name, const char *help) {
    CLI::App *sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "run configuration (JSON)")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "seed for random initial controls (overrides the config)");
    sub->add_option("--threads", threads, "OpenMP thread count")->check(CLI::PositiveNumber);
    sub->callback([&opts, name] { opts.command = name; });
  };
  add("mesh", "build the mesh and hexagonal control cells");
  add("forward", "solve the bare-obstacle problem and write the intensity baseline");
  add("optimize", "run the optimal control problem");
  add("invert", "map the optimized controls to unit-cell geometries");
  add("report", "summarize an optimization run");
  CLI11_PARSE(app, argc, argv);

  for (CLI::App *sub : app.get_subcommands()) {
    if (sub->count("--out")) opts.out = out;
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--threads")) opts.threads = threads;
  }
  return cloak::run_command(opts, std::cout, std::cerr);
}
