#include "bitgear/parallel.hpp"

#include <cstdlib>
#include <string>

namespace bitgear {

std::size_t default_threads() {
  if (const char* env = std::getenv("BITGEAR_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_chunks(std::size_t begin, std::size_t end, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (n == 0) return;
  if (threads == 0) threads = 1;
  const std::size_t workers = std::min(threads, n);
  if (workers == 1) {
    fn(0, begin, end);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) {
    const std::size_t lo = begin + t * chunk;
    if (lo >= end) break;
    const std::size_t hi = std::min(end, lo + chunk);
    pool.emplace_back([&fn, t, lo, hi] { fn(t, lo, hi); });
  }
  fn(0, begin, std::min(end, begin + chunk));
  for (auto& th : pool) th.join();
}

}  // namespace bitgear
