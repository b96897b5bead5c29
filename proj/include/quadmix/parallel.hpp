#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace quadmix {

// Items are cut into fixed-size blocks whose boundaries depend only on the
// item count, never on the thread count. Workers pull block indices from an
// atomic counter; callers combine per-block outputs in block-index order,
// which makes results identical for any --threads value.
constexpr std::size_t kBlockSize = 4096;

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

inline std::size_t block_count(std::size_t items, std::size_t block_size = kBlockSize) {
    return (items + block_size - 1) / block_size;
}

// fn(block_index, begin, end) must only touch state owned by that block.
template <typename Fn>
void for_each_block(std::size_t items, int threads, Fn&& fn, std::size_t block_size = kBlockSize) {
    const std::size_t nblocks = block_count(items, block_size);
    if (nblocks == 0) return;
    threads = std::clamp<int>(resolve_threads(threads), 1, static_cast<int>(nblocks));
    if (threads == 1) {
        for (std::size_t b = 0; b < nblocks; ++b) {
            fn(b, b * block_size, std::min(items, (b + 1) * block_size));
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            fn(b, b * block_size, std::min(items, (b + 1) * block_size));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

// Runs fn(i) for i in [0, count) on a worker pool; no ordering guarantees.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    for_each_block(
        count, threads,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        },
        1);
}

}  // namespace quadmix
