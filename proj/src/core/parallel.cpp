#include "core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace dsam {

namespace {
std::atomic<int> g_workers{0};  // 0 = auto
}

void set_worker_threads(int n) { g_workers.store(n < 0 ? 0 : n); }

int worker_threads() {
    int n = g_workers.load();
    if (n == 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
    }
    return n;
}

std::int64_t chunk_count(std::int64_t count, std::int64_t chunk_size) {
    if (count <= 0) return 0;
    return (count + chunk_size - 1) / chunk_size;
}

void parallel_chunks(std::int64_t count, std::int64_t chunk_size,
                     const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
    const std::int64_t chunks = chunk_count(count, chunk_size);
    if (chunks == 0) return;
    const int workers = static_cast<int>(std::min<std::int64_t>(worker_threads(), chunks));
    if (workers <= 1) {
        for (std::int64_t k = 0; k < chunks; ++k) {
            fn(k * chunk_size, std::min(count, (k + 1) * chunk_size), static_cast<int>(k));
        }
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto body = [&]() {
        for (;;) {
            const std::int64_t k = next.fetch_add(1);
            if (k >= chunks) return;
            fn(k * chunk_size, std::min(count, (k + 1) * chunk_size), static_cast<int>(k));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int t = 0; t < workers - 1; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
}

}  // namespace dsam
