#include "meshflow/parallel.hpp"

#include <atomic>

namespace meshflow {

namespace {
std::atomic<int> g_threads {1};
}

int thread_budget() { return g_threads.load(); }

void set_thread_budget(int threads) { g_threads.store(threads < 1 ? 1 : threads); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const int workers = std::min<std::int64_t>(thread_budget(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace meshflow
