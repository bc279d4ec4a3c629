#pragma once

#include <cstdint>
#include <functional>

namespace dsam {

// Runs fn(begin, end, chunk_index) over fixed-size chunks of [0, count).
// Chunk boundaries depend only on count and chunk_size, never on the worker
// count, so callers that write into chunk-indexed buffers and reduce them in
// chunk order stay bit-deterministic under any thread count.
void parallel_chunks(std::int64_t count, std::int64_t chunk_size,
                     const std::function<void(std::int64_t, std::int64_t, int)>& fn);

std::int64_t chunk_count(std::int64_t count, std::int64_t chunk_size);

// Worker threads used by parallel_chunks (defaults to hardware concurrency).
void set_worker_threads(int n);
int worker_threads();

}  // namespace dsam
