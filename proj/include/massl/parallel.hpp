#pragma once

#include <cstddef>
#include <functional>

namespace massl {

/// Worker count: MASSL_THREADS if set (>= 1), else the hardware concurrency.
std::size_t worker_threads();

/// Calls fn(begin, end) on disjoint contiguous chunks covering [0, n). Chunks
/// are processed concurrently; callers write results by index, so the outcome
/// does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace massl
