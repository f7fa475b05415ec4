#pragma once
#include <cstdint>

#include "seqstn/tensor.hpp"

namespace seqstn {

/// Box-average down-sampling by an integer factor d, applied to each glimpse
/// before the classification network. d must divide both spatial extents;
/// a non-divisor is a hard error, never a silent truncation.
Tensor avg_downsample(const Tensor& u, int d);

/// Spreads each output gradient uniformly as grad/d^2 over its window.
Tensor avg_downsample_backward(const Tensor& grad_v, int d);

}  // namespace seqstn
