#pragma once

#include <cstddef>
#include <functional>

namespace lingscrub {

/// Worker count: LINGSCRUB_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) across worker threads. Each index is handled
/// exactly once; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lingscrub
