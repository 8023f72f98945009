#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pxnet {

/// Runs `count` tasks on up to `threads` workers; task(k) must be independent of order.
template <class Task>
void parallel_for(int count, int threads, Task&& task) {
    if (threads <= 1 || count <= 1) {
        for (int k = 0; k < count; ++k) task(k);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(threads, count); ++t) {
        pool.emplace_back([&] {
            for (int k = next++; k < count; k = next++) {
                try {
                    task(k);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace pxnet
