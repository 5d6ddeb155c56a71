#pragma once

#include <cstddef>
#include <functional>

namespace twrmcae {

/// Worker count: TWRMCAE_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();
/// Overrides the worker count for the current process (0 restores the default).
void set_worker_count(std::size_t n);

/// Runs body(i) for i in [0, n). Iterations are independent; callers write
/// results into per-index slots and reduce afterwards in index order, which
/// makes the outcome identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace twrmcae
