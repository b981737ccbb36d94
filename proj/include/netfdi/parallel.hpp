#ifndef NETFDI_PARALLEL_HPP
#define NETFDI_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace netfdi {

inline unsigned worker_thread_count() {
    if (const char* env = std::getenv("NETFDI_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Index-ordered parallel loop; results must be written to per-index slots so
// the outcome is independent of the thread split. The first exception wins and
// is rethrown on the caller.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const unsigned workers = std::min<std::size_t>(worker_thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error = nullptr;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            while (!failed.load(std::memory_order_relaxed)) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) break;
                try {
                    body(i);
                } catch (...) {
                    bool expected = false;
                    if (failed.compare_exchange_strong(expected, true))
                        first_error = std::current_exception();
                    break;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace netfdi

#endif
