#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace recnn {

/// 0 means "all hardware threads".
std::size_t resolve_threads(std::size_t requested);

/// Runs fn(index, worker) for every index in [0, count) on up to `threads`
/// workers. The first exception (lowest index) is rethrown after all workers
/// finish.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t index, std::size_t worker)>& fn);

/// Computes one vector term per index, possibly concurrently, and adds the
/// terms into `sum` strictly in index order, so the result does not depend on
/// the thread count. `term` overwrites its output span and returns a scalar
/// that is summed the same way; the scalar sum is returned.
double ordered_sum(std::size_t count, std::size_t threads, std::span<double> sum,
                   const std::function<double(std::size_t index, std::span<double> out)>& term);

}  // namespace recnn
