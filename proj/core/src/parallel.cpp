#include "spdo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace spdo {

namespace {

int initial_thread_count() {
    if (const char* env = std::getenv("SPDO_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

std::atomic<int>& thread_setting() {
    static std::atomic<int> n{initial_thread_count()};
    return n;
}

}  // namespace

int thread_count() { return thread_setting().load(); }

void set_thread_count(int n) { thread_setting().store(std::max(1, n)); }

int chunk_count(std::size_t n) {
    if (n == 0) return 0;
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n));
}

void parallel_chunks(std::size_t n,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
    const int chunks = chunk_count(n);
    if (chunks == 0) return;
    auto bounds = [&](int c) {
        return std::pair<std::size_t, std::size_t>{n * c / chunks, n * (c + 1) / chunks};
    };
    if (chunks == 1) {
        fn(0, 0, n);
        return;
    }
    std::vector<std::exception_ptr> errors(chunks);
    std::vector<std::thread> workers;
    workers.reserve(chunks - 1);
    for (int c = 1; c < chunks; ++c) {
        workers.emplace_back([&, c] {
            try {
                auto [b, e] = bounds(c);
                fn(c, b, e);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    try {
        auto [b, e] = bounds(0);
        fn(0, b, e);
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace spdo
