#pragma once
#include <cassert>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seqstn/error.hpp"
#include "seqstn/rng.hpp"

namespace seqstn {

/// Dense row-major tensor of f64. Values are treated as immutable once an
/// operation has returned a tensor; sharing across threads for reading is
/// safe. Everything downstream (layers, STN, LSTM, models) is built on this
/// one container.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> values);
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& operator()(int64_t i, int64_t j) {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double operator()(int64_t i, int64_t j) const {
    return const_cast<Tensor&>(*this)(i, j);
  }
  double& operator()(int64_t i, int64_t j, int64_t k) {
    assert(rank() == 3);
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double operator()(int64_t i, int64_t j, int64_t k) const {
    return const_cast<Tensor&>(*this)(i, j, k);
  }
  double& operator()(int64_t i, int64_t j, int64_t k, int64_t l) {
    assert(rank() == 4);
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  double operator()(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return const_cast<Tensor&>(*this)(i, j, k, l);
  }

  /// Same data under a new shape (element count must match).
  Tensor reshaped(std::vector<int64_t> shape) const;

  void fill(double v);
  bool all_finite() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

/// When set, internal parallelism is pinned so results are bit-identical to a
/// single-threaded run (the library's own OpenMP kernels are schedule-invariant
/// by construction; this additionally forces the BLAS backend to one thread).
void set_deterministic(bool on);
bool deterministic();

/// C[MxN] = A[MxK] * B[KxN]. Throws ShapeError on rank/dimension mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Raw GEMM kernels on row-major buffers; the three transpose variants cover
// every forward/backward product in the network without materializing any
// transpose. When `accumulate` is set C is added to, otherwise overwritten.
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate = false);                       // C = A[mxk] B[kxn]
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate = false);                       // C = A[mxk] B[nxk]^T
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
             bool accumulate = false);                       // C = A[kxm]^T B[kxn]

Tensor ew_add(const Tensor& a, const Tensor& b);
Tensor ew_add(const Tensor& a, double b);
Tensor ew_mul(const Tensor& a, const Tensor& b);
Tensor ew_mul(const Tensor& a, double b);

template <typename F>
Tensor ew_map(const Tensor& a, F&& f) {
  Tensor out = Tensor::zeros_like(a);
  const double* src = a.data();
  double* dst = out.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  return out;
}

/// Uniform draws from +-sqrt(6/(fan_in+fan_out)); the variance-preserving
/// default used for every weight tensor in the models.
Tensor init_fan_scaled(Rng& rng, std::vector<int64_t> shape, int64_t fan_in, int64_t fan_out);

// "TNSR" container: magic, u32 rank, u64 extents, raw f64 payload, all
// little-endian. Shared by the checkpoint and dataset formats.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace seqstn
