#pragma once

// OpenMP shim and execution-policy switch shared by the hot kernels.
// Every parallel kernel in this project is written so that its floating-point
// result is identical for any thread count: work is partitioned over
// independent output slots (grid bins, series, cycles, particle blocks) and
// reductions happen in a fixed serial order afterwards.

#if defined(_OPENMP)
#include <omp.h>
#else
static inline int omp_get_max_threads() { return 1; }
static inline int omp_get_thread_num() { return 0; }
static inline void omp_set_num_threads(int) {}
#endif

namespace mcycle {

enum class Exec { Serial, Parallel };

inline int max_threads() { return omp_get_max_threads(); }

}  // namespace mcycle
