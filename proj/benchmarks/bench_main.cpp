// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
// The packaged benchmark_main archive carries LTO bytecode from another compiler release.
#include <benchmark/benchmark.h>

BENCHMARK_MAIN();
