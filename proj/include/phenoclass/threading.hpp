#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace pheno {

// Worker cap: PHENOCLASS_THREADS wins, else hardware concurrency.
inline int worker_count() {
    if (const char* env = std::getenv("PHENOCLASS_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work items must write to disjoint slots;
// results are then independent of the thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn, int max_threads = 0) {
    if (n <= 0) return;
    int threads = max_threads > 0 ? max_threads : worker_count();
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([t, threads, n, &fn] {
            for (int i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace pheno
