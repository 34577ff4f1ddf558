#pragma once

#include <cstddef>
#include <functional>

namespace evpr {

/// Number of worker threads to use when the caller passes 0.
unsigned default_thread_count() noexcept;

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Work is claimed dynamically; if any call throws, the
/// exception from the lowest failing index that ran is rethrown after all
/// workers stop.
void parallel_for(size_t n, unsigned threads, const std::function<void(size_t)>& fn);

}  // namespace evpr
