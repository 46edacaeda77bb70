#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace odmpc::par {

// Number of worker threads the OpenMP kernels will use (1 when built
// without OpenMP). 0 or negative requests leave the setting unchanged.
int max_threads();
void set_threads(int n);

// Runs fn(i) for i in [0, n). Iterations must be independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Map-reduce with a fixed chunk decomposition. Chunks are processed in
// parallel but combined in chunk order, so the result does not depend on
// the thread count. Acc must be default-constructible via make().
//
//   accumulate(chunk_begin, chunk_end, acc) fills one chunk's partial sum;
//   combine(total, acc) folds partials together, called in chunk order.
template <typename Acc, typename Make, typename Accumulate, typename Combine>
Acc chunked_reduce(std::size_t n, std::size_t chunk, const Make& make,
                   const Accumulate& accumulate, const Combine& combine) {
  if (chunk == 0) chunk = 1;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<Acc> partial(n_chunks);
  parallel_for(n_chunks, [&](std::size_t c) {
    partial[c] = make();
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    accumulate(lo, hi, partial[c]);
  });
  Acc total = make();
  for (std::size_t c = 0; c < n_chunks; ++c) combine(total, partial[c]);
  return total;
}

}  // namespace odmpc::par
