#pragma once

#include <cstddef>
#include <functional>

namespace pointmtl {

// Number of worker threads: POINTMTL_THREADS when set (>=1), else hardware
// concurrency. Read once per process.
int max_threads();

// Runs fn(i) for i in [0, n). Work items must write to disjoint slots; the
// result is then identical for any thread count. Falls back to a serial loop
// when n is small or only one thread is available.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace pointmtl
