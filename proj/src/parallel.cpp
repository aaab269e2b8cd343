#include "msm/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>

#include <omp.h>

namespace msm {

int worker_threads() {
  static const int threads = [] {
    if (const char* env = std::getenv("MSM_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) return n;
    }
    return omp_get_max_threads();
  }();
  return threads;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = worker_threads();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
#pragma omp parallel for schedule(static) num_threads(threads)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace msm
