#include <memory>

#include <benchmark/benchmark.h>

#include "cloakopt/ocp.hpp"

using namespace cloak;

namespace {

struct Problem {
  Mesh mesh;
  CellPartition part;
  BackgroundMedium medium;
  FrequencySpec freq;
  std::unique_ptr<OcpProblem> ocp;
  std::unique_ptr<OcpProblem::Evaluation> ev;
};

// Circular obstacle with lambda / r = 0.69 and a cloak of radius 1.57 r.
const Problem &problem() {
  static const Problem p = [] {
    Problem p;
    const double lambda = 0.69;
    DomainSpec spec;
    spec.obstacle = Contour::make_circle({0, 0}, 1.0, 96);
    spec.cloak_outer = Contour::make_circle({0, 0}, 1.57, 96);
    spec.outer_radius = 2.5;
    spec.cell_edge = 0.087 * lambda;
    const auto hexes = generate_hex_partition(spec);
    p.mesh = build_mesh(spec, hexes, MeshOptions{0.5 * spec.cell_edge, lambda / 8, 0.0, 1.25});
    p.part = assign_cells(p.mesh, hexes);
    p.freq = FrequencySpec::from_wavelength(lambda, {1, 0}, p.medium);
    OcpConfig cfg;
    cfg.frequencies = {p.freq};
    p.ocp = std::make_unique<OcpProblem>(
        std::vector<AssembledOperators>{assemble_constants(p.mesh, p.part, p.medium, p.freq)}, p.part, cfg);
    ControlState c = ControlState::zeros(p.part.num_cells);
    c.v.setConstant(0.1);
    c.u.setConstant(-0.1);
    p.ev = std::make_unique<OcpProblem::Evaluation>(p.ocp->evaluate(c));
    p.ocp->solve_adjoints(*p.ev);
    return p;
  }();
  return p;
}

void BM_assemble_constants(benchmark::State &state) {
  const Problem &p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(assemble_constants(p.mesh, p.part, p.medium, p.freq));
  state.counters["triangles"] = static_cast<double>(p.mesh.num_triangles());
}

void BM_assemble_constants_serial(benchmark::State &state) {
  const Problem &p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(assemble_constants_serial(p.mesh, p.part, p.medium, p.freq));
  state.counters["triangles"] = static_cast<double>(p.mesh.num_triangles());
}

void BM_reduced_gradient(benchmark::State &state) {
  const Problem &p = problem();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reduced_gradient(p.ev->ctrl, p.ev->sols, p.ocp->ops(), p.ocp->config(), p.ocp->laplacian()));
  state.counters["cells"] = static_cast<double>(p.part.num_cells);
}

void BM_reduced_gradient_serial(benchmark::State &state) {
  const Problem &p = problem();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reduced_gradient_serial(p.ev->ctrl, p.ev->sols, p.ocp->ops(), p.ocp->config(), p.ocp->laplacian()));
  state.counters["cells"] = static_cast<double>(p.part.num_cells);
}

}  // namespace

BENCHMARK(BM_assemble_constants)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_assemble_constants_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_reduced_gradient)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_reduced_gradient_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
