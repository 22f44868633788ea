#include <benchmark/benchmark.h>

#include "conelayer/analysis.hpp"
#include "conelayer/oracles.hpp"

using namespace conelayer;

namespace {

void BM_generate_mesh(benchmark::State& state) {
  Aperture ap = Aperture::from_theta_deg(80.0);
  MeridianDomain dom = build_domain(ap, 60.0);
  MeshParams mp{1.6 / state.range(0), 4.0, 15.0};
  for (auto _ : state) {
    Mesh mesh = generate_mesh(dom, mp);
    benchmark::DoNotOptimize(mesh.node_count());
  }
}
BENCHMARK(BM_generate_mesh)->Arg(4)->Arg(8)->Arg(16);

void BM_assemble_weighted(benchmark::State& state) {
  Aperture ap = Aperture::from_theta_deg(80.0);
  Mesh mesh = generate_mesh(build_domain(ap, 60.0), {1.6 / state.range(0), 4.0, 15.0});
  for (auto _ : state) {
    AssembledSystem sys = assemble_weighted(mesh, ap, 0);
    benchmark::DoNotOptimize(sys.n_free);
  }
  state.counters["ndof"] = static_cast<double>(mesh.node_count());
}
BENCHMARK(BM_assemble_weighted)->Arg(4)->Arg(8)->Arg(16);

void BM_solve_lowest(benchmark::State& state) {
  Aperture ap = Aperture::from_theta_deg(80.0);
  Mesh mesh = generate_mesh(build_domain(ap, 60.0), {1.6 / state.range(0), 4.0, 15.0});
  AssembledSystem sys = assemble_weighted(mesh, ap, 0);
  EigenSolveParams p;
  p.k = 4;
  for (auto _ : state) {
    Spectrum sp = solve_lowest(sys, p);
    benchmark::DoNotOptimize(sp.values.data());
  }
  state.counters["nfree"] = static_cast<double>(sys.n_free);
}
BENCHMARK(BM_solve_lowest)->Arg(4)->Arg(8);

void BM_bessel_zero(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracles::bessel_j0_zero(10));
  }
}
BENCHMARK(BM_bessel_zero);

}  // namespace

BENCHMARK_MAIN();
