#pragma once
#include <array>
#include <cstdint>
#include <vector>

#include "seqstn/layers.hpp"
#include "seqstn/stn.hpp"
#include "seqstn/tensor.hpp"

namespace seqstn {

/// Vanilla LSTM (no peepholes), four gate blocks. Gate order throughout:
/// input i, forget f, output o, candidate g.
struct LstmParams {
  Tensor wi, wf, wo, wg;  // [cells x in]
  Tensor ui, uf, uo, ug;  // [cells x cells]
  Tensor bi, bf, bo, bg;  // [cells]
};

/// Fan-scaled weights, zero biases except the forget gate's, which starts
/// at 1.0 so early training does not wash the cell state out.
LstmParams make_lstm_params(Rng& rng, int64_t cells, int64_t in);

struct LstmState {
  Tensor c, h;  // [B x cells], or [cells] for a single element
};

struct LstmCache {
  Tensor x, h_prev, c_prev;
  Tensor gi, gf, go, gg;  // gate activations
  Tensor tanh_c;
};

/// i,f,o = sigmoid(Wx + Uh + b); g = tanh(Wx + Uh + b);
/// c_t = f.c_prev + i.g; h_t = o.tanh(c_t).
LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmParams& p,
                    LstmCache* cache = nullptr);

struct LstmStepGrads {
  Tensor grad_x;
  LstmState grad_prev;
};
/// Parameter gradients accumulate into `grad_accum` (same container type).
LstmStepGrads lstm_step_backward(const LstmCache& cache, const LstmParams& p,
                                 const Tensor& grad_h, const Tensor& grad_c,
                                 LstmParams& grad_accum);

/// The localization network: 4 x (conv + relu + maxpool) feature extractor,
/// LSTM over the (time-invariant) feature map, linear head emitting one
/// affine transform per step.
struct LocNetParams {
  std::array<ConvParams, 4> conv;
  LstmParams lstm;
  DenseParams head;  // cells -> 6; zero weights + identity bias at init
};

/// Feature length after the 4 pool stages, or a ShapeError for inputs the
/// stack cannot pool down (< 16 px per side).
int64_t locnet_feature_dim(int64_t h, int64_t w, int64_t filters);

LocNetParams make_locnet_params(Rng& rng, int64_t filters, int64_t cells, int64_t canvas_h,
                                int64_t canvas_w);
LocNetParams zeros_like_locnet(const LocNetParams& p);

/// Conv stack + flatten for one canvas [1 x H x W].
Tensor extract_features(const Tensor& u, const std::array<ConvParams, 4>& conv);

struct FeatCache {
  Tensor input;                        // [B x 1 x H x W]
  std::array<Tensor, 4> act;           // post-relu conv outputs [B x F x h x w]
  std::array<PoolResult, 4> pool;
};

/// Batched features [B x F] from canvases [B x H x W]; the whole batch runs
/// through one GEMM per conv layer.
Tensor extract_features_batch(const Tensor& canvases, const std::array<ConvParams, 4>& conv,
                              FeatCache& cache);
/// Backward through the stack; conv grads accumulate into `grad_accum`;
/// returns grad wrt the canvases [B x H x W].
Tensor extract_features_backward_batch(const FeatCache& cache,
                                       const std::array<ConvParams, 4>& conv,
                                       const Tensor& grad_feat,
                                       std::array<ConvParams, 4>& grad_accum);

struct LocSeqCache {
  int64_t batch = 0, canvas_h = 0, canvas_w = 0;
  FeatCache feat;
  Tensor fmap;                   // [B x F]
  std::vector<LstmCache> steps;  // per time step, batched
  std::vector<Tensor> h;         // per step [B x cells]
  std::vector<Tensor> thetas;    // per step [B x 6]
};

/// Batched core: canvases [B x H x W] -> one [B x 6] theta per step. The same
/// feature map feeds the LSTM at every step; the recursion evolves only
/// through (c, h), which start at zero.
std::vector<Tensor> localize_sequence_batch(const Tensor& canvases, const LocNetParams& p,
                                            int steps, LocSeqCache& cache);

/// BPTT over the cached run; parameter grads accumulate into `grad_accum`,
/// returns grad wrt the canvases [B x H x W].
Tensor localize_sequence_backward_batch(const LocSeqCache& cache, const LocNetParams& p,
                                        const std::vector<Tensor>& grad_thetas,
                                        LocNetParams& grad_accum);

/// Single-canvas wrappers matching the per-example contracts.
std::vector<AffineParams> localize_sequence(const Tensor& u, const LocNetParams& p, int steps,
                                            LocSeqCache& cache);
struct LocNetBackwardResult {
  LocNetParams grads;
  Tensor grad_u;
};
LocNetBackwardResult localize_sequence_backward(const LocSeqCache& cache, const LocNetParams& p,
                                                const std::vector<Tensor>& grad_thetas);

}  // namespace seqstn
