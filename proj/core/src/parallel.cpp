#include "recnn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace recnn {

std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  threads = std::min(resolve_threads(threads), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i, 0);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();

  auto worker = [&](std::size_t id) {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i, id);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };

  {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker, t);
    worker(0);
  }
  if (error) std::rethrow_exception(error);
}

double ordered_sum(std::size_t count, std::size_t threads, std::span<double> sum,
                   const std::function<double(std::size_t, std::span<double>)>& term) {
  const std::size_t dim = sum.size();
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(count, 1));
  std::fill(sum.begin(), sum.end(), 0.0);
  double scalar = 0.0;

  if (threads <= 1) {
    std::vector<double> buffer(dim);
    for (std::size_t i = 0; i < count; ++i) {
      scalar += term(i, buffer);
      for (std::size_t k = 0; k < dim; ++k) sum[k] += buffer[k];
    }
    return scalar;
  }

  const std::size_t block = threads * 4;
  std::vector<double> buffers(block * dim);
  std::vector<double> scalars(block);
  for (std::size_t start = 0; start < count; start += block) {
    const std::size_t len = std::min(block, count - start);
    parallel_for(len, threads, [&](std::size_t j, std::size_t) {
      scalars[j] = term(start + j, std::span<double>(buffers).subspan(j * dim, dim));
    });
    for (std::size_t j = 0; j < len; ++j) {
      scalar += scalars[j];
      const double* b = buffers.data() + j * dim;
      for (std::size_t k = 0; k < dim; ++k) sum[k] += b[k];
    }
  }
  return scalar;
}

}  // namespace recnn
