#include "seqstn/stn.hpp"

#include <cmath>

namespace seqstn {

AffineParams AffineParams::from_row(const Tensor& t, int64_t row) {
  if (t.rank() == 1) {
    if (t.extent(0) != 6) throw ShapeError("AffineParams: expected 6 values");
    AffineParams p;
    for (int i = 0; i < 6; ++i) p.theta[static_cast<size_t>(i)] = t[i];
    return p;
  }
  if (t.rank() != 2 || t.extent(1) != 6) throw ShapeError("AffineParams: expected [B x 6]");
  AffineParams p;
  for (int i = 0; i < 6; ++i) p.theta[static_cast<size_t>(i)] = t(row, i);
  return p;
}

namespace {
inline double norm_coord(int64_t idx, int64_t n) {
  return n == 1 ? 0.0 : 2.0 * static_cast<double>(idx) / static_cast<double>(n - 1) - 1.0;
}
}  // namespace

SampleGrid affine_grid(const AffineParams& th, int64_t out_h, int64_t out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("affine_grid: output extents must be >= 1");
  SampleGrid g;
  g.out_h = out_h;
  g.out_w = out_w;
  g.coords = Tensor({out_h, out_w, 2});
  const auto& t = th.theta;
  double* pc = g.coords.data();
  for (int64_t i = 0; i < out_h; ++i) {
    const double yt = norm_coord(i, out_h);
    for (int64_t j = 0; j < out_w; ++j) {
      const double xt = norm_coord(j, out_w);
      pc[(i * out_w + j) * 2 + 0] = t[0] * xt + t[1] * yt + t[2];
      pc[(i * out_w + j) * 2 + 1] = t[3] * xt + t[4] * yt + t[5];
    }
  }
  return g;
}

namespace {
struct Corner {
  int64_t ix, iy;
  double fx, fy;  // fractional offsets from (ix, iy)
};

inline Corner locate(double xs, double ys, int64_t H, int64_t W) {
  Corner c;
  const double xp = (xs + 1.0) * static_cast<double>(W - 1) / 2.0;
  const double yp = (ys + 1.0) * static_cast<double>(H - 1) / 2.0;
  c.ix = static_cast<int64_t>(std::floor(xp));
  c.iy = static_cast<int64_t>(std::floor(yp));
  c.fx = xp - static_cast<double>(c.ix);
  c.fy = yp - static_cast<double>(c.iy);
  return c;
}

inline double pixel_or_zero(const double* plane, int64_t H, int64_t W, int64_t y, int64_t x) {
  return (y < 0 || y >= H || x < 0 || x >= W) ? 0.0 : plane[y * W + x];
}
}  // namespace

Tensor bilinear_sample(const Tensor& u, const SampleGrid& grid) {
  if (u.rank() != 3) throw ShapeError("bilinear_sample: image must be [C x H x W]");
  if (grid.coords.rank() != 3 || grid.coords.extent(0) != grid.out_h ||
      grid.coords.extent(1) != grid.out_w || grid.coords.extent(2) != 2)
    throw ShapeError("bilinear_sample: malformed grid");
  const int64_t C = u.extent(0), H = u.extent(1), W = u.extent(2);
  Tensor v({C, grid.out_h, grid.out_w});
  const double* pc = grid.coords.data();
  const double* pu = u.data();
  double* pv = v.data();
  const int64_t n = grid.out_h * grid.out_w;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const Corner cr = locate(pc[2 * i], pc[2 * i + 1], H, W);
    const double w00 = (1.0 - cr.fy) * (1.0 - cr.fx);
    const double w01 = (1.0 - cr.fy) * cr.fx;
    const double w10 = cr.fy * (1.0 - cr.fx);
    const double w11 = cr.fy * cr.fx;
    for (int64_t c = 0; c < C; ++c) {
      const double* plane = pu + c * H * W;
      pv[c * n + i] = w00 * pixel_or_zero(plane, H, W, cr.iy, cr.ix) +
                      w01 * pixel_or_zero(plane, H, W, cr.iy, cr.ix + 1) +
                      w10 * pixel_or_zero(plane, H, W, cr.iy + 1, cr.ix) +
                      w11 * pixel_or_zero(plane, H, W, cr.iy + 1, cr.ix + 1);
    }
  }
  return v;
}

SampleGrads bilinear_sample_backward(const Tensor& u, const SampleGrid& grid,
                                     const Tensor& grad_v) {
  const int64_t C = u.extent(0), H = u.extent(1), W = u.extent(2);
  const int64_t n = grid.out_h * grid.out_w;
  if (grad_v.rank() != 3 || grad_v.extent(0) != C || grad_v.extent(1) != grid.out_h ||
      grad_v.extent(2) != grid.out_w)
    throw ShapeError("bilinear_sample_backward: grad_v shape mismatch");

  SampleGrads g;
  g.grad_u = Tensor({C, H, W});
  g.grad_coords = Tensor({grid.out_h, grid.out_w, 2});
  const double* pc = grid.coords.data();
  const double* pu = u.data();
  const double* gv = grad_v.data();
  double* gu = g.grad_u.data();
  double* gc = g.grad_coords.data();
  const double sx = static_cast<double>(W - 1) / 2.0;  // d pixel / d normalized
  const double sy = static_cast<double>(H - 1) / 2.0;

  for (int64_t i = 0; i < n; ++i) {
    Corner cr = locate(pc[2 * i], pc[2 * i + 1], H, W);
    // On an exact pixel center the kernel has a kink; shifting to the cell on
    // the left reproduces the same forward weights while selecting the
    // left-limit slope for the coordinate gradient.
    if (cr.fx == 0.0) {
      cr.ix -= 1;
      cr.fx = 1.0;
    }
    if (cr.fy == 0.0) {
      cr.iy -= 1;
      cr.fy = 1.0;
    }
    const double w00 = (1.0 - cr.fy) * (1.0 - cr.fx);
    const double w01 = (1.0 - cr.fy) * cr.fx;
    const double w10 = cr.fy * (1.0 - cr.fx);
    const double w11 = cr.fy * cr.fx;
    double dx = 0.0, dy = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      const double go = gv[c * n + i];
      const double* plane = pu + c * H * W;
      double* gplane = gu + c * H * W;
      const bool y0 = cr.iy >= 0 && cr.iy < H;
      const bool y1 = cr.iy + 1 >= 0 && cr.iy + 1 < H;
      const bool x0 = cr.ix >= 0 && cr.ix < W;
      const bool x1 = cr.ix + 1 >= 0 && cr.ix + 1 < W;
      if (y0 && x0) gplane[cr.iy * W + cr.ix] += go * w00;
      if (y0 && x1) gplane[cr.iy * W + cr.ix + 1] += go * w01;
      if (y1 && x0) gplane[(cr.iy + 1) * W + cr.ix] += go * w10;
      if (y1 && x1) gplane[(cr.iy + 1) * W + cr.ix + 1] += go * w11;

      const double u00 = y0 && x0 ? plane[cr.iy * W + cr.ix] : 0.0;
      const double u01 = y0 && x1 ? plane[cr.iy * W + cr.ix + 1] : 0.0;
      const double u10 = y1 && x0 ? plane[(cr.iy + 1) * W + cr.ix] : 0.0;
      const double u11 = y1 && x1 ? plane[(cr.iy + 1) * W + cr.ix + 1] : 0.0;
      dx += go * ((1.0 - cr.fy) * (u01 - u00) + cr.fy * (u11 - u10));
      dy += go * ((1.0 - cr.fx) * (u10 - u00) + cr.fx * (u11 - u01));
    }
    gc[2 * i + 0] = dx * sx;
    gc[2 * i + 1] = dy * sy;
  }
  return g;
}

Tensor affine_grid_backward(const Tensor& grad_coords, int64_t out_h, int64_t out_w) {
  if (grad_coords.rank() != 3 || grad_coords.extent(0) != out_h ||
      grad_coords.extent(1) != out_w || grad_coords.extent(2) != 2)
    throw ShapeError("affine_grid_backward: grad shape mismatch");
  Tensor gt({6});
  const double* gc = grad_coords.data();
  for (int64_t i = 0; i < out_h; ++i) {
    const double yt = norm_coord(i, out_h);
    for (int64_t j = 0; j < out_w; ++j) {
      const double xt = norm_coord(j, out_w);
      const double gx = gc[(i * out_w + j) * 2 + 0];
      const double gy = gc[(i * out_w + j) * 2 + 1];
      gt[0] += gx * xt;
      gt[1] += gx * yt;
      gt[2] += gx;
      gt[3] += gy * xt;
      gt[4] += gy * yt;
      gt[5] += gy;
    }
  }
  return gt;
}

}  // namespace seqstn
