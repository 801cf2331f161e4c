#pragma once

// Deterministic data-parallel loop. AXUNET_THREADS caps the worker count;
// the default is single-threaded. Work is partitioned by index, so results
// are bitwise identical for any thread count as long as callers write
// disjoint outputs per index.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace axunet {

inline int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("AXUNET_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<int>(std::min(v, 256L));
        }
        return 1;
    }();
    return cached;
}

template <typename F>
void parallel_for(std::int64_t n, F&& f) {
    const std::int64_t workers = std::min<std::int64_t>(max_threads(), n);
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (std::int64_t t = 0; t < workers; ++t) {
        const std::int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f] {
            for (std::int64_t i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace axunet
