#pragma once

// Worker-count invariant parallel loops. Every task writes only to its own
// slot; reductions happen afterwards on the calling thread in index order, so
// results never depend on how many workers ran.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace sae {

/// Worker count: SAE_BENCH_THREADS when set and positive, otherwise the
/// hardware concurrency (at least 1).
std::size_t default_worker_count();

/// 0 means default_worker_count().
inline std::size_t resolve_workers(std::size_t requested) {
    return requested == 0 ? default_worker_count() : requested;
}

/// Runs body(i) for i in [0, n). If any call throws, the exception from the
/// smallest failing index is rethrown after all workers finish.
template <class Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
    workers = std::clamp<std::size_t>(resolve_workers(workers), 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto run = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline constexpr std::size_t kReductionBlock = 256;

/// Computes map(i) in parallel, block by block, and hands each result to
/// consume(i, value) in increasing i on the calling thread. Memory is bounded
/// by one block of results.
template <class Map, class Consume>
void ordered_map_consume(std::size_t n, std::size_t workers, Map&& map, Consume&& consume,
                         std::size_t block = kReductionBlock) {
    using Value = std::invoke_result_t<Map&, std::size_t>;
    std::vector<std::optional<Value>> slots(std::min(block, n));
    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t len = std::min(block, n - start);
        parallel_for(len, workers, [&](std::size_t k) { slots[k].emplace(map(start + k)); });
        for (std::size_t k = 0; k < len; ++k) {
            consume(start + k, std::move(*slots[k]));
            slots[k].reset();
        }
    }
}

}  // namespace sae
