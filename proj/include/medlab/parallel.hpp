#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace medlab {

/// Worker count: an explicit request wins, then the MEDLAB_WORKERS environment
/// variable, then the hardware concurrency. Always at least 1.
int resolve_workers(std::optional<int> requested = std::nullopt);

/// Evaluates f(0..n-1) on up to `workers` threads and returns the results in
/// index order, so any reduction over the vector is independent of scheduling.
/// If several calls throw, the exception of the lowest index is rethrown.
template <class F>
auto parallel_map(std::size_t n, int workers, F&& f) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
    using R = std::invoke_result_t<F&, std::size_t>;
    std::vector<std::optional<R>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                slots[i].emplace(f(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(workers > 0 ? workers : 1));
    if (threads <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace medlab
