#include "inkdiff/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace inkdiff {

int max_threads() {
    static int cached = [] {
        if (const char* env = std::getenv("INKDIFF_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }();
    return cached;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& range_fn) {
    if (n <= 0) return;
    int workers = std::min<int64_t>(max_threads(), n);
    if (workers <= 1) {
        range_fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min<int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        pool.emplace_back([&range_fn, lo, hi] { range_fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace inkdiff
