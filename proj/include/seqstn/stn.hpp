#pragma once
#include <array>
#include <cstdint>

#include "seqstn/tensor.hpp"

namespace seqstn {

/// The 2x3 affine transform, row-major [t11 t12 t13; t21 t22 t23]. Any finite
/// values are legal; the sampler tolerates non-invertible transforms.
struct AffineParams {
  std::array<double, 6> theta{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  static AffineParams identity() { return AffineParams{}; }
  static AffineParams from_row(const Tensor& t, int64_t row);
};

/// Normalized source coordinates, one (x_s, y_s) pair per output pixel.
/// Coordinates live in [-1, 1] with corner alignment: index 0 maps to -1,
/// index n-1 to +1, a single-pixel axis to 0. Out-of-range values are fine
/// (they sample black).
struct SampleGrid {
  int64_t out_h = 0;
  int64_t out_w = 0;
  Tensor coords;  // [out_h x out_w x 2]
};

/// Applies theta to every normalized target coordinate.
SampleGrid affine_grid(const AffineParams& theta, int64_t out_h, int64_t out_w);

/// Tent-kernel sampling of u [C x H x W] at the grid's source points. Only the
/// at-most-four pixels with nonzero kernel weight are touched; the literal
/// full double sum lives in the serial reference as the test oracle.
Tensor bilinear_sample(const Tensor& u, const SampleGrid& grid);

struct SampleGrads {
  Tensor grad_u;       // [C x H x W]
  Tensor grad_coords;  // [out_h x out_w x 2], in normalized units
};
/// grad_u scatters each output gradient to its contributing pixels; the
/// coordinate gradient uses the tent kernel's piecewise-constant slope with
/// the left-limit value at the kinks (x exactly on a pixel center), so the
/// subgradient choice is fixed and testable.
SampleGrads bilinear_sample_backward(const Tensor& u, const SampleGrid& grid,
                                     const Tensor& grad_v);

/// grad_theta = sum_i grad_coords_i (x) (x_t, y_t, 1); returned as a [6]
/// tensor in AffineParams order.
Tensor affine_grid_backward(const Tensor& grad_coords, int64_t out_h, int64_t out_w);

}  // namespace seqstn
