#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "seqstn/tensor.hpp"

namespace seqstn {

/// 3x3 convolution bank: weights [out_ch x in_ch x 3 x 3], bias [out_ch].
struct ConvParams {
  Tensor weights;
  Tensor bias;
};

ConvParams make_conv_params(Rng& rng, int64_t out_ch, int64_t in_ch);

/// Cross-correlation, stride 1, zero padding `pad`. With pad=1 the spatial
/// size is preserved, which keeps the paper's layer stacks well-defined.
Tensor conv2d_forward(const Tensor& x, const ConvParams& p, int pad);

struct ConvGrads {
  Tensor grad_x;
  Tensor grad_weights;
  Tensor grad_bias;
};
ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& grad_out, int pad);

/// Batched variants over [B x C x H x W]; weight/bias gradients come back
/// summed over the batch.
Tensor conv2d_forward_batch(const Tensor& x, const ConvParams& p, int pad);
ConvGrads conv2d_backward_batch(const Tensor& x, const ConvParams& p, const Tensor& grad_out,
                                int pad);

/// Fused conv(pad 1) + relu + 2x2 maxpool over a batch. The full-resolution
/// activation map never materializes: rows are convolved into a two-row ring
/// buffer and pooled immediately, with relu liveness kept as a bitset. This
/// is the building block of every conv stack in the models; at canvas
/// resolution in f64 the unfused chain is memory-bound, the fused one is not.
struct ConvBlockCache {
  std::vector<int64_t> x_shape;
  int64_t act_h = 0, act_w = 0;      // conv output spatial size (== input, pad 1)
  Tensor pooled;                     // [B x OC x act_h/2 x act_w/2]
  std::vector<int32_t> argmax;       // flat act index per pooled element
  std::vector<uint64_t> live;        // relu liveness bit per act element
};
Tensor conv_block_forward_batch(const Tensor& x, const ConvParams& p, ConvBlockCache* cache);
/// grad wrt x; weight/bias grads accumulate into `grad_accum`.
Tensor conv_block_backward_batch(const Tensor& x, const ConvParams& p,
                                 const ConvBlockCache& cache, const Tensor& grad_pooled,
                                 ConvParams& grad_accum);

/// 2x2/stride-2 max pooling; odd trailing row/column dropped. `argmax` holds
/// the flat in-plane index of each window's maximum (first row-major element
/// on ties) and is what routes the gradient back.
struct PoolResult {
  Tensor values;
  std::vector<int32_t> argmax;
};
PoolResult maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const PoolResult& fwd, const std::vector<int64_t>& x_shape,
                         const Tensor& grad_out);

/// Fully connected layer: weights [out x in], bias [out].
struct DenseParams {
  Tensor weights;
  Tensor bias;
};

DenseParams make_dense_params(Rng& rng, int64_t out, int64_t in);

/// x may be a single vector [in] or a batch [B x in].
Tensor dense_forward(const Tensor& x, const DenseParams& p);

struct DenseGrads {
  Tensor grad_x;
  Tensor grad_weights;
  Tensor grad_bias;
};
DenseGrads dense_backward(const Tensor& x, const DenseParams& p, const Tensor& grad_out);

Tensor relu(const Tensor& x);
/// grad through relu given the forward *output* (y > 0 iff the unit was live).
Tensor relu_backward(const Tensor& y, const Tensor& grad_out);

/// Inverted dropout: at train time kept units are scaled by 1/keep, at eval
/// the input passes through untouched. The caller owns the Rng so parallel
/// workers can hold disjoint streams.
struct DropoutMask {
  Tensor mask;  // 0 or 1/keep per element; empty in eval mode
};
Tensor dropout_forward(const Tensor& x, double keep, Rng& rng, bool train, DropoutMask* mask);
Tensor dropout_backward(const DropoutMask& mask, const Tensor& grad_out);

/// Softmax + mean negative log-likelihood over the batch.
struct XentResult {
  double loss;
  Tensor probs;  // same shape as logits
};
XentResult softmax_xent_forward(const Tensor& logits, std::span<const int> labels);
/// (prob - onehot) / batch, optionally scaled (used to average across heads).
Tensor softmax_xent_backward(const XentResult& fwd, std::span<const int> labels,
                             double scale = 1.0);

}  // namespace seqstn
