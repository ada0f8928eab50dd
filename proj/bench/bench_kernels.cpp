// Parallel kernels against their serial references, plus end-to-end frames.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "test_support.hpp"
#include "turbsim/config.hpp"
#include "turbsim/geometric.hpp"
#include "turbsim/kernels.hpp"
#include "turbsim/random.hpp"
#include "turbsim/reference.hpp"

using namespace turbsim;

namespace {

const Image& frame() {
  static const Image img = testing_support::synthetic_scene(640, 512, 1);
  return img;
}

// state.range(0): threads for the parallel version
void set_threads(benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

void BM_ConvolveParallel(benchmark::State& state) {
  set_threads(state);
  const Kernel k = testing_support::random_kernel(5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(convolve(frame(), k));
}

void BM_ConvolveReference(benchmark::State& state) {
  const Kernel k = testing_support::random_kernel(5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(reference::convolve(frame(), k));
}

void BM_WarpParallel(benchmark::State& state) {
  set_threads(state);
  const DistortionField f = distortion_field(512, 640, GeometricParams{}, Seed{3});
  for (auto _ : state) benchmark::DoNotOptimize(warp(frame(), f));
}

void BM_WarpReference(benchmark::State& state) {
  const DistortionField f = distortion_field(512, 640, GeometricParams{}, Seed{3});
  for (auto _ : state) benchmark::DoNotOptimize(reference::warp(frame(), f));
}

void BM_WhiteNoiseParallel(benchmark::State& state) {
  set_threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(white_noise_field(512, 640, Seed{4}));
}

void BM_WhiteNoiseReference(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reference::white_noise_field(512, 640, Seed{4}));
}

void BM_Geometric640x512(benchmark::State& state) {
  set_threads(state);
  std::uint64_t s = 0;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_geometric(frame(), GeometricParams{}, Seed{s++}));
}

void BM_Zernike640x512(benchmark::State& state) {
  set_threads(state);
  const Simulator sim(preset("table2"));
  std::uint64_t s = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sim.run(frame(), Seed{s++}));
}

void BM_P2s640x512(benchmark::State& state) {
  set_threads(state);
  const Simulator sim(preset("table3"));
  std::uint64_t s = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sim.run(frame(), Seed{s++}));
}

}  // namespace

BENCHMARK(BM_ConvolveParallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvolveReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WarpParallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WarpReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WhiteNoiseParallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WhiteNoiseReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Geometric640x512)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Zernike640x512)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_P2s640x512)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
