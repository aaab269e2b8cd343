#pragma once

#include <cstddef>
#include <functional>

namespace msm {

/// Worker count: MSM_THREADS if set and positive, otherwise the OpenMP default.
int worker_threads();

/// Runs `fn(i)` for i in [0, n). Iterations must be independent; callers that
/// reduce do so afterwards in index order so results do not depend on thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace msm
