// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "splatseg/transient_net.hpp"
#include "test_support.hpp"

using namespace splatseg;
using namespace splatseg::testing;

static void BM_TransientForward(benchmark::State &state) {
  const TransientPredictor net{TransientNetConfig{}};
  ImageF image = random_image(128, 128, 3, 1);
  for (double &v : image.data) v = 0.5 + 0.5 * v;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(image));
}
BENCHMARK(BM_TransientForward)->Unit(benchmark::kMillisecond);

static void BM_TransientBackward(benchmark::State &state) {
  const TransientPredictor net{TransientNetConfig{}};
  ImageF image = random_image(128, 128, 3, 2);
  for (double &v : image.data) v = 0.5 + 0.5 * v;
  const TransientForward fwd = net.forward(image);
  const ImageF grad = random_image(128, 128, 1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.backward(fwd, grad));
}
BENCHMARK(BM_TransientBackward)->Unit(benchmark::kMillisecond);
