#pragma once

#include <cstddef>
#include <functional>

namespace knoweeg {

// Worker count: KNOWEEG_THREADS if set and positive, else the hardware
// concurrency (at least 1).
std::size_t default_threads();

// Runs fn(i) for every i in [0, n) on up to `threads` workers (0 means
// default_threads()). Each index is visited exactly once; callers write to
// index-owned slots so the result does not depend on scheduling. The first
// exception thrown by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t threads = 0);

}  // namespace knoweeg
