#include "seqstn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "seqstn/bytesio.hpp"

extern "C" {
void dgemm_(const char* transa, const char* transb, const int* m, const int* n, const int* k,
            const double* alpha, const double* a, const int* lda, const double* b, const int* ldb,
            const double* beta, double* c, const int* ldc);
void openblas_set_num_threads(int);
int openblas_get_num_threads(void);
}

namespace seqstn {

namespace {
std::atomic<bool> g_deterministic{true};
int g_blas_default_threads = 0;
std::once_flag g_blas_init;

void apply_blas_threads() {
  std::call_once(g_blas_init, [] { g_blas_default_threads = openblas_get_num_threads(); });
  openblas_set_num_threads(g_deterministic.load() ? 1 : g_blas_default_threads);
}
}  // namespace

void set_deterministic(bool on) {
  g_deterministic.store(on);
  apply_blas_threads();
}

bool deterministic() { return g_deterministic.load(); }

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  int64_t n = 1;
  for (int64_t e : shape_) {
    if (e <= 0) throw ShapeError("tensor extents must be positive");
    n *= e;
  }
  data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values) {
  Tensor t;
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive");
    n *= e;
  }
  if (n != static_cast<int64_t>(values.size()))
    throw ShapeError("value count does not match shape");
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t{std::move(shape)};
  t.fill(value);
  return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
  return Tensor::from(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

namespace {
// Row-major products through Fortran dgemm by computing C^T column-major.
void dgemm_rowmajor(char ta, char tb, int64_t m, int64_t n, int64_t k, const double* a,
                    int64_t lda, const double* b, int64_t ldb, double* c, int64_t ldc,
                    bool accumulate) {
  std::call_once(g_blas_init, [] {
    g_blas_default_threads = openblas_get_num_threads();
    openblas_set_num_threads(g_deterministic.load() ? 1 : g_blas_default_threads);
  });
  const int mi = static_cast<int>(n), ni = static_cast<int>(m), ki = static_cast<int>(k);
  const int ldai = static_cast<int>(ldb), ldbi = static_cast<int>(lda), ldci = static_cast<int>(ldc);
  const double alpha = 1.0, beta = accumulate ? 1.0 : 0.0;
  dgemm_(&tb, &ta, &mi, &ni, &ki, &alpha, b, &ldai, a, &ldbi, &beta, c, &ldci);
}
}  // namespace

void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  dgemm_rowmajor('N', 'N', m, n, k, a, k, b, n, c, n, accumulate);
}

void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  dgemm_rowmajor('N', 'T', m, n, k, a, k, b, k, c, n, accumulate);
}

void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  dgemm_rowmajor('T', 'N', m, n, k, a, m, b, n, c, n, accumulate);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 tensors, got " + a.shape_str() + " and " + b.shape_str());
  if (a.extent(1) != b.extent(0))
    throw ShapeError("matmul inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  Tensor c({a.extent(0), b.extent(1)});
  gemm_nn(a.extent(0), b.extent(1), a.extent(1), a.data(), b.data(), c.data());
  return c;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                     " disagree");
}
}  // namespace

Tensor ew_add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ew_add");
  Tensor out = Tensor::zeros_like(a);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const int64_t n = a.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor ew_add(const Tensor& a, double b) {
  return ew_map(a, [b](double v) { return v + b; });
}

Tensor ew_mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ew_mul");
  Tensor out = Tensor::zeros_like(a);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const int64_t n = a.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  return out;
}

Tensor ew_mul(const Tensor& a, double b) {
  return ew_map(a, [b](double v) { return v * b; });
}

Tensor init_fan_scaled(Rng& rng, std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out) {
  if (fan_in <= 0 || fan_out <= 0) throw ValueError("init_fan_scaled: fans must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t{std::move(shape)};
  double* p = t.data();
  const int64_t n = t.size();
  for (int64_t i = 0; i < n; ++i) p[i] = rng.uniform(-bound, bound);
  return t;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  bytesio::put_magic(os, "TNSR");
  bytesio::put_u32le(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) bytesio::put_u64le(os, static_cast<uint64_t>(t.extent(i)));
  for (int64_t i = 0; i < t.size(); ++i) bytesio::put_f64le(os, t[i]);
}

Tensor read_tensor(std::istream& is) {
  bytesio::expect_magic(is, "TNSR", "tensor");
  const uint32_t rank = bytesio::get_u32le(is);
  if (rank > 8) throw FormatError("tensor rank out of range");
  std::vector<int64_t> shape(rank);
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<int64_t>(bytesio::get_u64le(is));
    if (shape[i] <= 0 || n > (1ll << 40) / std::max<int64_t>(shape[i], 1))
      throw FormatError("tensor extents out of range");
    n *= shape[i];
  }
  std::vector<double> values(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) values[static_cast<size_t>(i)] = bytesio::get_f64le(is);
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace seqstn
