#include <benchmark/benchmark.h>

#include <random>

#include "spdo/icomesh.hpp"
#include "spdo/ops.hpp"
#include "spdo/stencil.hpp"

using namespace spdo;

namespace {

FeatureMap<float> noise(int level, int vertices, int orientations, int channels) {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n;
    FeatureMap<float> x(4, level, vertices, orientations, channels);
    for (auto& v : x.values) v = n(rng);
    return x;
}

OperatorWeights<float> weights(int c_out, int c_in, int offsets) {
    std::mt19937_64 rng(2);
    std::normal_distribution<float> n(0.0f, 0.1f);
    OperatorWeights<float> w(c_out, c_in, offsets);
    for (auto& v : w.values) v = n(rng);
    return w;
}

}  // namespace

static void BM_MeshBuild(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_mesh(static_cast<int>(state.range(0))));
}
BENCHMARK(BM_MeshBuild)->DenseRange(3, 6)->Unit(benchmark::kMillisecond);

static void BM_StencilBuild(benchmark::State& state) {
    const IcoMesh mesh = build_mesh(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_stencils(mesh));
    state.SetItemsProcessed(state.iterations() * mesh.vertex_count());
}
BENCHMARK(BM_StencilBuild)->DenseRange(3, 6)->Unit(benchmark::kMillisecond);

// batch 4, 1 -> 8 channels, N = 8
static void BM_PsiForward(benchmark::State& state) {
    const int level = static_cast<int>(state.range(0));
    const IcoMesh mesh = build_mesh(level);
    const auto st = CompactStencil<float>::from(build_stencils(mesh));
    const CyclicGroup g(8);
    const auto x = noise(level, mesh.vertex_count(), 1, 1);
    const auto w = weights(8, 1, 0);
    for (auto _ : state) benchmark::DoNotOptimize(psi_layer(x, w, g, st));
}
BENCHMARK(BM_PsiForward)->DenseRange(3, 5)->Unit(benchmark::kMillisecond);

// batch 4, 8 -> 8 channels, N = 8
static void BM_PhiForward(benchmark::State& state) {
    const int level = static_cast<int>(state.range(0));
    const IcoMesh mesh = build_mesh(level);
    const auto st = CompactStencil<float>::from(build_stencils(mesh));
    const CyclicGroup g(8);
    const auto x = noise(level, mesh.vertex_count(), 8, 8);
    const auto w = weights(8, 8, 8);
    for (auto _ : state) benchmark::DoNotOptimize(phi_layer(x, w, g, st));
}
BENCHMARK(BM_PhiForward)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

static void BM_PhiBackward(benchmark::State& state) {
    const int level = static_cast<int>(state.range(0));
    const IcoMesh mesh = build_mesh(level);
    const auto st = CompactStencil<float>::from(build_stencils(mesh));
    const CyclicGroup g(8);
    const auto x = noise(level, mesh.vertex_count(), 8, 8);
    const auto w = weights(8, 8, 8);
    const auto gy = noise(level, mesh.vertex_count(), 8, 8);
    OperatorWeights<float> gw(8, 8, 8);
    for (auto _ : state) benchmark::DoNotOptimize(phi_layer_backward(x, w, g, st, gy, gw));
}
BENCHMARK(BM_PhiBackward)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
