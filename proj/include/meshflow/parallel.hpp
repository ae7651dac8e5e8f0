#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace meshflow {

/// Process-wide worker budget for internal parallelism (CLI --threads /
/// MESHFLOW_THREADS). Defaults to 1.
int thread_budget();
void set_thread_budget(int threads);

/// Chunked parallel loop over [0, n). Each worker writes only to slots of its
/// own indices, and callers reduce over slots in index order afterwards, so
/// results are identical for any thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace meshflow
