// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "splatseg/losses.hpp"

using namespace splatseg;

// Contrastive loss is quadratic in the sample count.
static void BM_ContrastiveLoss(benchmark::State &state) {
  const int n = static_cast<int>(state.range(0)), dim = 16;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> label(1, 12);
  std::vector<double> features(static_cast<std::size_t>(n) * dim);
  std::vector<int> labels(n);
  for (double &v : features) v = g(rng);
  for (int &l : labels) l = label(rng);
  for (auto _ : state) benchmark::DoNotOptimize(loss_contrastive(features, labels, dim, 0.01));
  state.SetComplexityN(n);
}
BENCHMARK(BM_ContrastiveLoss)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oNSquared)->Unit(benchmark::kMillisecond);

static void BM_LossRgbWeighted(benchmark::State &state) {
  const int w = 128, h = 128;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageF gt(w, h, 3), r(w, h, 3);
  TransientMap p(w, h, 1);
  for (double &v : gt.data) v = u(rng);
  for (double &v : r.data) v = u(rng);
  for (double &v : p.data) v = u(rng);
  Camera cam;
  cam.width = w;
  cam.height = h;
  cam.cx = cam.cy = 63.5;
  cam.fx = cam.fy = 110.0;
  cam.valid_radius = 90.0;
  const FormationMasks masks = build_masks(cam);
  for (auto _ : state) benchmark::DoNotOptimize(loss_rgb_weighted(gt, r, p, masks));
}
BENCHMARK(BM_LossRgbWeighted);
