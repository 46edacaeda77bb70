#include "odmpc/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace odmpc::par {

#ifdef _OPENMP
static int g_threads = 0;  // 0 = OpenMP default

int max_threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

void set_threads(int n) {
  if (n > 0) {
    g_threads = n;
    omp_set_num_threads(n);
  }
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
}

#else

int max_threads() { return 1; }
void set_threads(int) {}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

#endif

}  // namespace odmpc::par
