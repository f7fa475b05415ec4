#include "seqstn/downsample.hpp"

namespace seqstn {

namespace {
void check_factor(const Tensor& t, int d, const char* op) {
  if (t.rank() != 3) throw ShapeError(std::string(op) + ": input must be [C x H x W]");
  if (d < 1) throw ValueError(std::string(op) + ": factor must be >= 1");
}
}  // namespace

Tensor avg_downsample(const Tensor& u, int d) {
  check_factor(u, d, "avg_downsample");
  const int64_t C = u.extent(0), H = u.extent(1), W = u.extent(2);
  if (H % d != 0 || W % d != 0)
    throw ValueError("avg_downsample: factor " + std::to_string(d) + " does not divide " +
                     u.shape_str());
  if (d == 1) return u;
  const int64_t OH = H / d, OW = W / d;
  Tensor v({C, OH, OW});
  const double inv = 1.0 / static_cast<double>(d) / static_cast<double>(d);
  const double* pu = u.data();
  double* pv = v.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t oy = 0; oy < OH; ++oy) {
      for (int64_t ox = 0; ox < OW; ++ox) {
        double s = 0.0;
        for (int64_t dy = 0; dy < d; ++dy) {
          const double* row = pu + (c * H + oy * d + dy) * W + ox * d;
          for (int64_t dx = 0; dx < d; ++dx) s += row[dx];
        }
        pv[(c * OH + oy) * OW + ox] = s * inv;
      }
    }
  }
  return v;
}

Tensor avg_downsample_backward(const Tensor& grad_v, int d) {
  check_factor(grad_v, d, "avg_downsample_backward");
  if (d == 1) return grad_v;
  const int64_t C = grad_v.extent(0), OH = grad_v.extent(1), OW = grad_v.extent(2);
  Tensor gu({C, OH * d, OW * d});
  const double inv = 1.0 / static_cast<double>(d) / static_cast<double>(d);
  const double* gv = grad_v.data();
  double* pg = gu.data();
  const int64_t H = OH * d, W = OW * d;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t oy = 0; oy < OH; ++oy) {
      for (int64_t ox = 0; ox < OW; ++ox) {
        const double g = gv[(c * OH + oy) * OW + ox] * inv;
        for (int64_t dy = 0; dy < d; ++dy) {
          double* row = pg + (c * H + oy * d + dy) * W + ox * d;
          for (int64_t dx = 0; dx < d; ++dx) row[dx] = g;
        }
      }
    }
  }
  return gu;
}

}  // namespace seqstn
