#ifndef IABSDE_PARALLEL_HPP
#define IABSDE_PARALLEL_HPP

#include <algorithm>
#include <cstdlib>
#include <cstddef>
#include <thread>
#include <vector>

namespace iabsde {

/// Number of worker threads the library may use.  Defaults to the machine
/// parallelism; the IABSDE_THREADS environment variable caps it (a value of 1
/// forces fully serial execution).  Read once and cached.
inline unsigned worker_threads() {
    static const unsigned cached = [] {
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        if (const char* env = std::getenv("IABSDE_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end != env && v >= 1) hw = std::min<long>(v, hw) > 0 ? static_cast<unsigned>(std::min<long>(v, hw)) : 1u;
        }
        return hw;
    }();
    return cached;
}

/**
 * Run fn(begin, end) over disjoint chunks of [0, n) on up to worker_threads()
 * threads.
 *
 * Results are required to be independent of the partitioning: fn must only
 * write to slots owned by its index range.  Reductions belong in the caller,
 * combining per-index (or fixed-block) partials in index order after the
 * parallel region so that floating-point summation order never depends on the
 * thread count.
 */
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    if (n == 0) return;
    const unsigned nt = std::min<std::size_t>(worker_threads(), n);
    if (nt <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::size_t chunk = (n + nt - 1) / nt;
    for (unsigned t = 0; t < nt; ++t) {
        const std::size_t b = std::min<std::size_t>(t * chunk, n);
        const std::size_t e = std::min<std::size_t>(b + chunk, n);
        if (b == e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace iabsde

#endif  // IABSDE_PARALLEL_HPP
