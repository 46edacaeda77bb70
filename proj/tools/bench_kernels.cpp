// Compares the OpenMP kernels against their serial reference
// implementations on synthetic workloads.

#include <chrono>
#include <cstdio>
#include <random>

#include "odmpc/mlp.hpp"
#include "odmpc/online_estimator.hpp"
#include "odmpc/parallel.hpp"
#include "odmpc/priors.hpp"

using namespace odmpc;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  // Warm-up run, then best of reps.
  fn();
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double omp_ms) {
  std::printf("%-22s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name,
              serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  int n = 200000;
  if (argc > 1) n = std::atoi(argv[1]);
  std::printf("threads: %d, rows: %d\n", par::max_threads(), n);

  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int d = 10;
  MatrixXd rows(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) rows(i, j) = gauss(rng);
  }

  report("batch_moments",
         time_ms([&] { batch_moments_serial(rows); }, 5),
         time_ms([&] { batch_moments(rows); }, 5));

  std::vector<GmmComponent> comps(8);
  for (auto& c : comps) {
    c.weight = 1.0 / 8;
    c.mean = VectorXd::NullaryExpr(d, [&](int) { return gauss(rng); });
    MatrixXd a = MatrixXd::NullaryExpr(d, d, [&](int, int) { return gauss(rng); });
    c.cov = a * a.transpose() / d + MatrixXd::Identity(d, d);
  }
  report("gmm_estep",
         time_ms([&] { gmm_estep_serial(comps, rows); }, 5),
         time_ms([&] { gmm_estep(comps, rows); }, 5));

  StateLayout layout;
  layout.pos_idx = {0, 1};
  layout.vel_idx = {2, 3};
  MLPModel net = make_mlp(4, 2, true, 0.05, layout, 7);
  const int batch = 4096;
  MatrixXd inputs(batch, net.input_dim());
  MatrixXd targets(batch, net.d_x);
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < net.input_dim(); ++j) inputs(i, j) = gauss(rng);
    for (int j = 0; j < net.d_x; ++j) targets(i, j) = gauss(rng);
  }
  std::vector<int> idx(batch);
  for (int i = 0; i < batch; ++i) idx[i] = i;
  report("mlp_batch_gradient",
         time_ms([&] { mlp_batch_gradient_serial(net, inputs, targets, idx); }, 5),
         time_ms([&] { mlp_batch_gradient(net, inputs, targets, idx); }, 5));
  return 0;
}
