#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace formation_lab {

/// Worker cap: FORMATION_LAB_THREADS when set to a positive integer, else the
/// hardware concurrency.
inline unsigned default_threads() {
    if (const char* env = std::getenv("FORMATION_LAB_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return static_cast<unsigned>(n);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline std::atomic<unsigned>& thread_cap() {
    static std::atomic<unsigned> cap{default_threads()};
    return cap;
}

inline void set_thread_cap(unsigned n) { thread_cap() = std::max(1u, n); }

/// Calls fn(i) for i in [0, n). Each index is handled exactly once, so
/// writing to slot i of a preallocated output keeps results deterministic.
/// The first exception thrown by any call is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(thread_cap().load(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }
    if (error) std::rethrow_exception(error);
}

} // namespace formation_lab
