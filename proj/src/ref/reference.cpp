#include "reference.hpp"

#include <algorithm>
#include <cmath>

namespace seqstn::ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
    throw ShapeError("ref::matmul: bad shapes");
  const int64_t M = a.extent(0), K = a.extent(1), N = b.extent(1);
  Tensor c({M, N});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < K; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Tensor conv2d_forward(const Tensor& x, const ConvParams& p, int pad) {
  const int64_t C = x.extent(0), H = x.extent(1), W = x.extent(2);
  const int64_t OC = p.weights.extent(0);
  const int64_t OH = H + 2 * pad - 2, OW = W + 2 * pad - 2;
  Tensor out({OC, OH, OW});
  for (int64_t oc = 0; oc < OC; ++oc)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        double s = p.bias[oc];
        for (int64_t c = 0; c < C; ++c)
          for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
              const int64_t iy = oy + ky - pad, ix = ox + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              s += x(c, iy, ix) * p.weights(oc, c, ky, kx);
            }
        out(oc, oy, ox) = s;
      }
  return out;
}

Tensor bilinear_sample(const Tensor& u, const SampleGrid& grid) {
  const int64_t C = u.extent(0), H = u.extent(1), W = u.extent(2);
  Tensor v({C, grid.out_h, grid.out_w});
  for (int64_t i = 0; i < grid.out_h; ++i)
    for (int64_t j = 0; j < grid.out_w; ++j) {
      const double xs = grid.coords(i, j, 0), ys = grid.coords(i, j, 1);
      const double xp = (xs + 1.0) * static_cast<double>(W - 1) / 2.0;
      const double yp = (ys + 1.0) * static_cast<double>(H - 1) / 2.0;
      for (int64_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int64_t n = 0; n < H; ++n)
          for (int64_t m = 0; m < W; ++m)
            s += u(c, n, m) * std::max(0.0, 1.0 - std::abs(xp - static_cast<double>(m))) *
                 std::max(0.0, 1.0 - std::abs(yp - static_cast<double>(n)));
        v(c, i, j) = s;
      }
    }
  return v;
}

Tensor avg_downsample(const Tensor& u, int d) {
  const int64_t C = u.extent(0), H = u.extent(1), W = u.extent(2);
  if (H % d || W % d) throw ValueError("ref::avg_downsample: non-divisor factor");
  Tensor v({C, H / d, W / d});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        v(c, y / d, x / d) += u(c, y, x) / static_cast<double>(d * d);
  return v;
}

}  // namespace seqstn::ref
