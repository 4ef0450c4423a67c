// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace splatseg {

/// Worker count used by internal parallel loops (defaults to hardware concurrency).
int worker_count();
void set_worker_count(int workers);

/// Runs body(i) for i in [0, n) across worker threads with static contiguous chunks.
/// Bodies must write disjoint outputs; reductions are done by callers in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace splatseg
