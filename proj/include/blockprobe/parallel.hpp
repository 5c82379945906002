#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace blockprobe {

/// Worker count from BLOCKPROBE_THREADS, else the hardware concurrency.
inline int default_threads() {
    if (const char* env = std::getenv("BLOCKPROBE_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) {
                return n;
            }
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs `fun(begin, end, worker)` over contiguous chunks of [0, n).
 *
 * Callers write results into per-index slots, so output never depends on how
 * the range was split. The first exception thrown by any worker is rethrown.
 */
template <typename Function_>
void parallelize(std::size_t n, int threads, Function_ fun) {
    if (n == 0) {
        return;
    }
    std::size_t workers = std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, n);
    if (workers == 1) {
        fun(std::size_t(0), n, 0);
        return;
    }

    std::size_t chunk = n / workers, extra = n % workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr failure;
    std::mutex failure_lock;

    std::size_t start = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t len = chunk + (w < extra ? 1 : 0);
        pool.emplace_back([&, start, len, w]() {
            try {
                fun(start, start + len, static_cast<int>(w));
            } catch (...) {
                std::lock_guard<std::mutex> guard(failure_lock);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
        start += len;
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace blockprobe
