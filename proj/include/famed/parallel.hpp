#pragma once

#include <cstddef>
#include <functional>

namespace famed {

/// Worker count from FAMED_THREADS (default 1, minimum 1).
int thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  int threads = thread_count());

}  // namespace famed
