#pragma once

#include <cstdint>

namespace rpf::core {

/// Thread-count control for the OpenMP kernels. 0 = library default.
void set_num_threads(int n);
int num_threads();

/// Parallel loop over [0, n). Each index is processed by exactly one thread
/// with static scheduling, so results are deterministic: every output element
/// is accumulated in a fixed serial order regardless of thread count.
template <typename F>
void parallel_for(int64_t n, F&& body) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace rpf::core
