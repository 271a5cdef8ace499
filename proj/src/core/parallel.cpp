#include "rpf/core/parallel.hpp"

#include <malloc.h>
#include <omp.h>

namespace rpf::core {

namespace {

// Multi-megabyte activation tensors churn every training step; keeping them
// on the heap instead of per-allocation mmap avoids refaulting the pages.
struct AllocatorSetup {
    AllocatorSetup() {
        mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    }
};
const AllocatorSetup allocator_setup;

}  // namespace

void set_num_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace rpf::core
