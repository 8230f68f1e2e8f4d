#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace cebm {

// Deterministic static partition: results never depend on the thread count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        body(0, n);
        return;
    }
    std::size_t nt = std::min<std::size_t>(std::size_t(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace cebm
