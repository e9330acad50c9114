#pragma once

#include <omp.h>

namespace proxygs {

/// Worker count for a kernel: `requested` if positive, otherwise the OpenMP default.
inline int resolve_workers(int requested) { return requested > 0 ? requested : omp_get_max_threads(); }

}  // namespace proxygs
