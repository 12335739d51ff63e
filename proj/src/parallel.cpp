#include "pathsde/parallel.hpp"

#include <atomic>

#include "pathsde/errors.hpp"

namespace pathsde {

namespace {
std::atomic<int> g_threads{1};
}

int thread_count() { return g_threads.load(); }

void set_thread_count(int n) {
    if (n < 1) throw ArgumentError("thread count must be at least 1");
    g_threads.store(n);
}

}  // namespace pathsde
