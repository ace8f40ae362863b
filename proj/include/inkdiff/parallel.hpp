#pragma once

#include <cstdint>
#include <functional>

namespace inkdiff {

// Thread cap: INKDIFF_THREADS env var, defaulting to the hardware count.
int max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous ranges, one per
// worker; each index is processed by exactly one thread, so any kernel whose
// per-index computation is deterministic stays deterministic under threading.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& range_fn);

} // namespace inkdiff
