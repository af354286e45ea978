#pragma once

#include <cstddef>
#include <functional>

namespace unicon {

// Worker count from UNICON_NUM_WORKERS (default 1, at least 1).
int num_workers();

// Runs fn(i) for i in [0, n) on up to `workers` threads. Every index is
// processed exactly once; the first exception is rethrown after all threads
// finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace unicon
