#pragma once
#include <string>

#include "seqstn/tensor.hpp"

namespace seqstn {

/// Binary PGM (P5, maxval 255) of an [H x W] image; values are clamped to
/// [0, 1] and rounded to bytes.
void write_pgm(const std::string& path, const Tensor& image);

}  // namespace seqstn
