#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "mzh/grid.hpp"

namespace mzh {

// Worker count: MZH_THREADS if set, hardware concurrency otherwise.
inline int thread_count() {
    static const int n = [] {
        if (const char* e = std::getenv("MZH_THREADS")) {
            const int v = std::atoi(e);
            if (v >= 1) return v;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc ? static_cast<int>(hc) : 1;
    }();
    return n;
}

// Elementwise map only: each index must write its own output slot.
// Reductions stay serial so results do not depend on the thread count.
template <class F>
void parallel_for(i64 begin, i64 end, F&& body) {
    const i64 count = end - begin;
    const int nt = thread_count();
    if (nt <= 1 || count < 1024) {
        for (i64 i = begin; i < end; ++i) body(i);
        return;
    }
    const int workers = static_cast<int>(std::min<i64>(nt, count));
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    const i64 chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const i64 lo = begin + w * chunk;
        const i64 hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (i64 i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace mzh
