// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "splatseg/segment.hpp"

using namespace splatseg;

static std::vector<double> blob_points(int n, int dim, int blobs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<std::vector<double>> centers(blobs, std::vector<double>(dim));
  for (auto &c : centers)
    for (double &v : c) v = u(rng);
  std::vector<double> pts;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < dim; ++k) pts.push_back(centers[i % blobs][k] + g(rng));
  return pts;
}

static void BM_Hdbscan(benchmark::State &state) {
  const int n = static_cast<int>(state.range(0));
  const auto pts = blob_points(n, 16, 8, 1);
  for (auto _ : state) benchmark::DoNotOptimize(hdbscan(pts, 16, {20, 0}));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Hdbscan)->RangeMultiplier(2)->Range(500, 4000)->Unit(benchmark::kMillisecond);

static void BM_FeatureDistances(benchmark::State &state) {
  GaussianCloud cloud(10000, 16, 0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double &v : cloud.feature) v = g(rng);
  const std::vector<double> query(16, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(feature_distances(cloud, query));
}
BENCHMARK(BM_FeatureDistances);
