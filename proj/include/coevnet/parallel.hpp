#pragma once

#include <cstddef>
#include <functional>

namespace coevnet {

/// Worker count: COEVNET_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for i in [0, count) on up to worker_count() threads. Each
/// index runs exactly once; results must go to per-index slots. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace coevnet
