#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gmt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Compensated accumulator. value() is the running sum.
class KahanSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    KahanSum& operator+=(double x) {
        add(x);
        return *this;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

/// Chunking policy for outer-index reductions.
/// The chunk boundaries depend only on `chunk`, so the result is the same for
/// every worker count.
struct Reduction {
    std::size_t chunk = 16;
    unsigned workers = 1;

    unsigned resolved_workers() const {
        if (workers != 0) return workers;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1u : hw;
    }
};

/// Runs body(lo, hi, acc) on fixed chunks [lo, hi) of [0, n), each into a fresh
/// accumulator, then folds the chunk accumulators in chunk order with merge.
template <class Acc, class Body, class Merge>
Acc chunked_reduce(std::size_t n, const Reduction& policy, Body&& body, Merge&& merge) {
    const std::size_t chunk = std::max<std::size_t>(1, policy.chunk);
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    std::vector<Acc> parts(nchunks);
    auto run = [&](std::size_t c) {
        const std::size_t lo = c * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        body(lo, hi, parts[c]);
    };
    const unsigned w = std::min<std::size_t>(policy.resolved_workers(), std::max<std::size_t>(1, nchunks));
    if (w <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(w);
        for (unsigned t = 0; t < w; ++t) {
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < nchunks; c = next++) run(c);
            });
        }
        for (auto& th : pool) th.join();
    }
    Acc total{};
    if (nchunks == 1) return std::move(parts[0]);
    for (const auto& p : parts) merge(total, p);
    return total;
}

/// Kahan sum of body(i) terms accumulated per chunk.
struct SumCount {
    KahanSum sum;
    std::uint64_t count = 0;
};

inline void merge_sum_count(SumCount& into, const SumCount& part) {
    into.sum.add(part.sum.value());
    into.count += part.count;
}

/// Parallel map over [0, n): out[i] = f(i). Writes are index-disjoint.
template <class F>
void parallel_for(std::size_t n, const Reduction& policy, F&& f) {
    const unsigned w = std::min<std::size_t>(policy.resolved_workers(), std::max<std::size_t>(1, n));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace gmt
