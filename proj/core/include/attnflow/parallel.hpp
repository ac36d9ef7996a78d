#pragma once

#include <cstddef>
#include <functional>

namespace attnflow {

// Worker count: ATTNFLOW_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
// write results into per-index slots so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace attnflow
