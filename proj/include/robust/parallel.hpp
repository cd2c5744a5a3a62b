#pragma once

#include <cstddef>
#include <functional>

namespace robust {

// Upper bound on worker threads. 0 restores the default (hardware concurrency).
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs body(begin, end, chunk) over a static partition of [0, n). Chunks are
// contiguous and numbered in index order, so callers that reduce per-chunk
// results in chunk order get the same answer for every thread count.
void parallel_chunks(std::size_t n, std::size_t n_chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

// body(i) for every i in [0, n); results must go to preallocated slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace robust
