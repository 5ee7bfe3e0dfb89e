#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pkt {

// Runs fn(i) for i in [0, n) on at most `workers` threads. Results must be
// written by index so output order never depends on scheduling. The first
// exception thrown by any task is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace pkt
