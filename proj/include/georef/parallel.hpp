#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace georef {

// Worker cap used by the data-parallel kernels (grid search, pose-graph
// residual evaluation, surfel statistics). 0 = use all hardware threads.
// Every kernel writes results into preallocated per-index slots and reduces
// serially in index order, so outputs are bit-identical for any cap.
inline int resolve_threads(int requested) {
#ifdef _OPENMP
    if (requested <= 0) return omp_get_max_threads();
    return requested;
#else
    (void)requested;
    return 1;
#endif
}

// Runs fn(i) for i in [0, n). threads <= 1 selects the serial reference
// path; the OpenMP path must produce identical per-index results.
template <class Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
    const int nt = resolve_threads(threads);
    if (nt <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
#else
    for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace georef
