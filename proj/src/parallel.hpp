#pragma once

// Static-chunk parallel loop over [begin, end). The first exception thrown by a worker is rethrown.

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qhedge::detail {

inline int resolve_threads(int threads) {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

template <class F>
void parallel_for(int begin, int end, int threads, F&& body) {
    const int n = end - begin;
    if (n <= 0) return;
    threads = std::clamp(resolve_threads(threads), 1, n);
    if (threads == 1) {
        for (int i = begin; i < end; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        const int lo = begin + static_cast<int>(static_cast<long long>(n) * w / threads);
        const int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / threads);
        pool.emplace_back([&, lo, hi] {
            try {
                for (int i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace qhedge::detail
