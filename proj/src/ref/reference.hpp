#pragma once
#include "seqstn/layers.hpp"
#include "seqstn/stn.hpp"
#include "seqstn/tensor.hpp"

// Plain serial implementations, written as directly as possible from the
// defining formulas. They are the oracles the optimized kernels are tested
// against and the baseline the benchmark compares with; nothing in the main
// library calls them.
namespace seqstn::ref {

/// Triple-loop matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Direct six-loop cross-correlation (stride 1, zero padding).
Tensor conv2d_forward(const Tensor& x, const ConvParams& p, int pad);

/// The literal tent-kernel double sum over every input pixel:
/// V_i^c = sum_n sum_m U_nm^c max(0, 1-|x_i - m|) max(0, 1-|y_i - n|).
Tensor bilinear_sample(const Tensor& u, const SampleGrid& grid);

/// Window means by direct accumulation.
Tensor avg_downsample(const Tensor& u, int d);

}  // namespace seqstn::ref
