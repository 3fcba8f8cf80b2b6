#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace twinmix {

// Strided parallel loop over [0, n). Work item i must write only to its own
// slot so results are identical for any thread count; callers derive
// per-item random streams from i, never from scheduling order.
template <class F>
void parallel_for(std::int64_t n, int threads, F&& f) {
    if (threads <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
    const int nt = static_cast<int>(std::min<std::int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (std::int64_t i = t; i < n; i += nt) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace twinmix
