// Serial reference paths against the OpenMP kernels on the 100k-face street.

#include "proxygs/reference.hpp"
#include "proxygs/scene.hpp"

#include <benchmark/benchmark.h>

#include <thread>

using namespace proxygs;

namespace {

const SceneBundle& street() {
  static const SceneBundle b = [] {
    SyntheticSpec spec;
    spec.box_subdiv = 12;
    spec.ground_subdiv = 100;
    spec.camera_count = 1;
    return generate_synthetic_scene(7, spec);
  }();
  return b;
}

const DepthMap& street_depth() {
  static const DepthMap d = rasterize_depth(street().proxy_mesh, street().cameras[0]);
  return d;
}

int all_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void BM_RasterSerial(benchmark::State& state) {
  RasterOptions o;
  o.workers = 1;
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_depth(street().proxy_mesh, street().cameras[0], o));
  state.counters["faces"] = static_cast<double>(street().proxy_mesh.face_count());
}

void BM_RasterParallel(benchmark::State& state) {
  RasterOptions o;
  o.workers = all_workers();
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_depth(street().proxy_mesh, street().cameras[0], o));
  state.counters["workers"] = o.workers;
}

void BM_RasterNoEarlyZ(benchmark::State& state) {
  RasterOptions o;
  o.workers = 1;
  o.early_z = false;
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_depth(street().proxy_mesh, street().cameras[0], o));
}

void BM_HiZ(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0)) == 0 ? all_workers() : 1;
  for (auto _ : state) benchmark::DoNotOptimize(build_hiz(street_depth(), workers));
}

void BM_CullFused(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0)) == 0 ? all_workers() : 1;
  const SceneBundle& b = street();
  for (auto _ : state) {
    benchmark::DoNotOptimize(cull_anchors(b.anchors, b.cameras[0], street_depth(), 0.3, {}, workers));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b.anchors.count()));
}

void BM_CullStaged(benchmark::State& state) {
  const SceneBundle& b = street();
  for (auto _ : state) benchmark::DoNotOptimize(cull_anchors_staged(b.anchors, b.cameras[0], street_depth(), 0.3));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b.anchors.count()));
}

void BM_CullScalarReference(benchmark::State& state) {
  const SceneBundle& b = street();
  for (auto _ : state) benchmark::DoNotOptimize(ref::cull_anchors(b.anchors, b.cameras[0], street_depth(), 0.3));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * b.anchors.count()));
}

void BM_Pipeline(benchmark::State& state) {
  const int workers = static_cast<int>(state.range(0)) == 0 ? all_workers() : 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_pipeline(street(), 0, workers));
}

}  // namespace

BENCHMARK(BM_RasterSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RasterParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RasterNoEarlyZ)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HiZ)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CullFused)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CullStaged)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CullScalarReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pipeline)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
