// Kernel benchmark: optimized paths against the serial reference
// implementations, with a correctness cross-check on every pair.
#include <cstdio>
#include <functional>
#include <string>

#include <omp.h>

#include "../src/ref/reference.hpp"
#include "seqstn/downsample.hpp"
#include "seqstn/layers.hpp"
#include "seqstn/stn.hpp"
#include "seqstn/tensor.hpp"

using namespace seqstn;

namespace {
Tensor random_tensor(Rng& rng, std::vector<int64_t> shape) {
  Tensor t{std::move(shape)};
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct Timed {
  double seconds;
  Tensor out;
};

Timed time_best_of(int reps, const std::function<Tensor()>& fn) {
  Timed r;
  r.seconds = 1e30;
  for (int i = 0; i < reps; ++i) {
    const double t0 = omp_get_wtime();
    Tensor out = fn();
    r.seconds = std::min(r.seconds, omp_get_wtime() - t0);
    if (i == 0) r.out = std::move(out);
  }
  return r;
}

void row(const std::string& name, double flops, const Timed& fast, const Timed& slow) {
  std::printf("%-28s %9.3f ms  %9.3f ms  %6.1fx  %8.2f GFLOP/s  max|diff| %.2e\n", name.c_str(),
              fast.seconds * 1e3, slow.seconds * 1e3, slow.seconds / fast.seconds,
              flops / fast.seconds / 1e9, max_diff(fast.out, slow.out));
}
}  // namespace

int main() {
  std::printf("threads: %d (OMP_NUM_THREADS), deterministic: %s\n", omp_get_max_threads(),
              deterministic() ? "on" : "off");
  std::printf("%-28s %12s %12s %8s %17s\n", "kernel", "optimized", "reference", "speedup",
              "throughput");
  Rng rng(1);

  {
    const int64_t M = 256, K = 512, N = 256;
    Tensor a = random_tensor(rng, {M, K});
    Tensor b = random_tensor(rng, {K, N});
    Timed fast = time_best_of(5, [&] { return matmul(a, b); });
    Timed slow = time_best_of(2, [&] { return ref::matmul(a, b); });
    row("matmul 256x512x256", 2.0 * M * K * N, fast, slow);
  }
  {
    Tensor x = random_tensor(rng, {20, 50, 50});
    ConvParams p{random_tensor(rng, {20, 20, 3, 3}), random_tensor(rng, {20})};
    Timed fast = time_best_of(5, [&] { return conv2d_forward(x, p, 1); });
    Timed slow = time_best_of(2, [&] { return ref::conv2d_forward(x, p, 1); });
    row("conv3x3 20ch 50x50", 2.0 * 20 * 20 * 9 * 50 * 50, fast, slow);
  }
  {
    Tensor u = random_tensor(rng, {1, 100, 100});
    AffineParams th;
    th.theta = {0.62, 0.11, -0.07, -0.08, 0.57, 0.13};
    SampleGrid g = affine_grid(th, 48, 48);
    Timed fast = time_best_of(5, [&] { return bilinear_sample(u, g); });
    Timed slow = time_best_of(2, [&] { return ref::bilinear_sample(u, g); });
    row("bilinear 100x100 -> 48x48", 8.0 * 48 * 48, fast, slow);
  }
  {
    Tensor u = random_tensor(rng, {32, 48, 48});
    Timed fast = time_best_of(5, [&] { return avg_downsample(u, 2); });
    Timed slow = time_best_of(2, [&] { return ref::avg_downsample(u, 2); });
    row("downsample d=2 32x48x48", static_cast<double>(u.size()), fast, slow);
  }
  return 0;
}
