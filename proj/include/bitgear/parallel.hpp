#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace bitgear {

// Resolution order: explicit argument > BITGEAR_THREADS > hardware.
std::size_t default_threads();

// Static partition of [begin, end) into at most `threads` contiguous chunks.
// fn(thread_index, chunk_begin, chunk_end) runs once per chunk; chunk 0 runs
// on the calling thread. Row-level work stays deterministic because each
// index is processed by exactly one chunk.
void parallel_chunks(std::size_t begin, std::size_t end, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn);

inline void parallel_for(std::size_t begin, std::size_t end,
                         std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  parallel_chunks(begin, end, threads,
                  [&](std::size_t, std::size_t lo, std::size_t hi) {
                    for (std::size_t i = lo; i < hi; ++i) fn(i);
                  });
}

}  // namespace bitgear
