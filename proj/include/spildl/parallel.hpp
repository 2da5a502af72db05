#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <iterator>
#include <mutex>
#include <thread>
#include <vector>

namespace spildl {

/// Splits [0, count) into at most `threads` contiguous chunks and runs
/// body(begin, end, chunkIndex) on each, one std::thread per chunk beyond
/// the first (which runs on the caller). The first exception thrown by any
/// chunk is rethrown after all chunks finish.
template <class Body>
void parallel_chunks(std::size_t count, std::size_t threads, Body&& body) {
    if (count == 0) return;
    threads = std::clamp<std::size_t>(threads, 1, count);
    if (threads == 1) {
        body(std::size_t{0}, count, std::size_t{0});
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&](std::size_t chunk) {
        const std::size_t begin = count * chunk / threads;
        const std::size_t end = count * (chunk + 1) / threads;
        try {
            body(begin, end, chunk);
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(run, t);
    run(0);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

/// body(i) for each i in [0, count), statically partitioned.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body) {
    parallel_chunks(count, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) body(i);
    });
}

/// Chunked sort followed by pairwise merge rounds. Produces the same order
/// as std::stable_sort for any thread count.
template <class It, class Less>
void parallel_sort(It first, It last, std::size_t threads, Less less) {
    const auto n = static_cast<std::size_t>(std::distance(first, last));
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n / 1024));
    if (threads <= 1) {
        std::stable_sort(first, last, less);
        return;
    }
    std::vector<std::size_t> bounds(threads + 1);
    for (std::size_t t = 0; t <= threads; ++t) bounds[t] = n * t / threads;
    parallel_chunks(threads, threads, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t c = b; c < e; ++c)
            std::stable_sort(first + bounds[c], first + bounds[c + 1], less);
    });
    for (std::size_t width = 1; width < threads; width *= 2) {
        std::vector<std::size_t> lefts;
        for (std::size_t c = 0; c + width < threads; c += 2 * width) lefts.push_back(c);
        parallel_for(lefts.size(), lefts.size(), [&](std::size_t i) {
            const std::size_t c = lefts[i];
            const std::size_t hi = std::min(threads, c + 2 * width);
            std::inplace_merge(first + bounds[c], first + bounds[c + width], first + bounds[hi], less);
        });
    }
}

}  // namespace spildl
