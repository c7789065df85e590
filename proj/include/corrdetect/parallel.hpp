#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace corrdetect {

// Runs fn(i, worker) for i in [0, n) on up to `workers` threads. Work is handed
// out in chunks from a shared counter; callers must make fn's result depend on
// i only. The first exception thrown by any task is rethrown here.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn, std::size_t chunk = 16)
{
    if (workers <= 1 || n <= chunk) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0u);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto body = [&](unsigned w) {
        try {
            for (;;) {
                const std::size_t lo = next.fetch_add(chunk);
                if (lo >= n) break;
                const std::size_t hi = lo + chunk < n ? lo + chunk : n;
                for (std::size_t i = lo; i < hi; ++i) fn(i, w);
            }
        } catch (...) {
            std::lock_guard lk(err_mu);
            if (!err) err = std::current_exception();
            next.store(n);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace corrdetect
