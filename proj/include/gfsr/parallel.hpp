#pragma once

#include <cstddef>
#include <functional>

namespace gfsr {

// Worker count: GFSR_THREADS if set (>= 1), else the hardware concurrency.
std::size_t worker_count();

// Calls fn(i) for i in [0, n) on up to worker_count() threads. The first
// exception thrown (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gfsr
