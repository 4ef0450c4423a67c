// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "splatseg/rasterizer.hpp"
#include "test_support.hpp"

using namespace splatseg;
using namespace splatseg::testing;

static void BM_RasterizeForward(benchmark::State &state) {
  const GaussianCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 16, 0, 1);
  const Camera cam = front_camera(128, 128, 110.0);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_forward(cloud, cam, Channels::Rgb));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RasterizeForward)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

static void BM_RasterizeFeatures(benchmark::State &state) {
  const GaussianCloud cloud = random_cloud(2048, static_cast<int>(state.range(0)), 0, 2);
  const Camera cam = front_camera(128, 128, 110.0);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_features(cloud, cam, 64, 64));
}
BENCHMARK(BM_RasterizeFeatures)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_RasterizeBackward(benchmark::State &state) {
  const GaussianCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 16, 0, 3);
  const Camera cam = front_camera(128, 128, 110.0);
  const RenderOutput out = rasterize_forward(cloud, cam, Channels::Rgb);
  const ImageF grad = random_image(128, 128, 3, 4);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_backward(cloud, out, &grad, nullptr));
}
BENCHMARK(BM_RasterizeBackward)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

static void BM_RasterizeReference(benchmark::State &state) {
  const GaussianCloud cloud = random_cloud(256, 0, 0, 5);
  const Camera cam = front_camera(64, 64, 55.0);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_reference(cloud, cam, Channels::Rgb));
}
BENCHMARK(BM_RasterizeReference)->Unit(benchmark::kMillisecond);
