#pragma once

#include <cstdint>
#include <functional>

namespace gwr {

// Global worker count for coarse-grained parallel regions. 0 = hardware
// concurrency. Thread count never changes results: work is cut into chunks
// whose boundaries depend only on (n, chunk_size), and callers combine
// per-chunk outputs in chunk order.
void set_threads(int n);
int thread_count();

// Runs fn(begin, end, chunk_index) for consecutive [begin, end) chunks of
// size chunk_size covering [0, n). Chunks may execute on any worker in any
// order; chunk_index identifies the chunk for ordered reduction by the caller.
void parallel_for_chunks(std::int64_t n, std::int64_t chunk_size,
                         const std::function<void(std::int64_t, std::int64_t, std::int64_t)>& fn);

}  // namespace gwr
