#ifndef GAITSET_THREADING_HPP_
#define GAITSET_THREADING_HPP_

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdlib>
#include <string>

namespace gaitset {

// Applies the GAITSET_THREADS override (if set) to OpenMP and Eigen.
// Returns the effective worker count. For a fixed worker count runs are
// bitwise reproducible: parallel loops use static partitioning and partial
// results are reduced in a fixed order on the calling thread.
inline int configure_threads() {
  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("GAITSET_THREADS")) {
    try {
      int req = std::stoi(env);
      if (req >= 1) threads = req;
    } catch (...) {
      // ignore malformed values, keep the default
    }
  }
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  Eigen::setNbThreads(1);  // GEMMs are already sharded frame-wise
  return threads;
}

}  // namespace gaitset

#endif  // GAITSET_THREADING_HPP_
