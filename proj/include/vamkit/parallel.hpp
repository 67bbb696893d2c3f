#pragma once

#include <cstddef>
#include <functional>

namespace vamkit {

/// Worker count: `requested` if non-zero, else $VAMKIT_THREADS, else the hardware concurrency.
unsigned resolve_threads(unsigned requested);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index runs
/// exactly once; callers write results into per-index slots and reduce them in
/// index order. The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace vamkit
