#pragma once

#include <cstddef>
#include <functional>

namespace gsamia {

/// Worker count from GSA_MIA_WORKERS, else hardware concurrency (min 1).
std::size_t default_workers();

/// Runs fn(index, worker) for index in [0, n) on up to `workers` threads.
/// Indices are handed out dynamically; the first exception is rethrown after
/// all threads join.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace gsamia
