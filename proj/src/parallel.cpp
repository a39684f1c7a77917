#include "gwr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gwr {

namespace {
std::atomic<int> g_threads{0};
}

void set_threads(int n) {
    g_threads.store(n < 0 ? 0 : n);
}

int thread_count() {
    int n = g_threads.load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for_chunks(std::int64_t n, std::int64_t chunk_size,
                         const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    if (chunk_size < 1) chunk_size = 1;
    const std::int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), n_chunks));

    if (workers <= 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c) {
            fn(c * chunk_size, std::min(n, (c + 1) * chunk_size), c);
        }
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto worker = [&] {
        for (;;) {
            std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                fn(c * chunk_size, std::min(n, (c + 1) * chunk_size), c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace gwr
