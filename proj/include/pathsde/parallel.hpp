#pragma once

// Static block scheduling over an index range. Each index is handled by
// exactly one worker and workers never share output slots, so results do
// not depend on the thread count.

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace pathsde {

// Process-wide worker count; 1 by default.
int thread_count();
void set_thread_count(int n);

template <class F>
void parallel_for(int n, F&& body) {
    const int workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
        const int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
        const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        pool.emplace_back([&, w, begin, end] {
            try {
                for (int i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace pathsde
