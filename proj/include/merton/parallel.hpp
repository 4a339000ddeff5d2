#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace merton {

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Runs f(i) for i in [0, n). Results must be written to slots indexed by i, so the
// outcome does not depend on scheduling. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex m;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next++;
                if (i >= n) break;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!first) first = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

}  // namespace merton
