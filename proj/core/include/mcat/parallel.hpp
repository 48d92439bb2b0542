#pragma once

#include <cstddef>
#include <functional>

namespace mcat {

/// Worker count: MCAT_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for every i in [0, n) on up to worker_count() threads. Jobs are
/// claimed in index order; the first exception thrown by any job is rethrown
/// after all workers stop. Callers write results into per-index slots so the
/// outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mcat
