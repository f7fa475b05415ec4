#include "seqstn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace seqstn {

namespace {
constexpr int kK = 3;  // every conv in the models is 3x3

struct ConvDims {
  int64_t B, C, H, W, OC, OH, OW;
};

ConvDims conv_dims(const Tensor& x, const ConvParams& p, int pad, bool batched) {
  const int want_rank = batched ? 4 : 3;
  if (x.rank() != want_rank)
    throw ShapeError(std::string("conv2d: input must be ") +
                     (batched ? "[B x C x H x W]" : "[C x H x W]") + ", got " + x.shape_str());
  if (p.weights.rank() != 4 || p.weights.extent(2) != kK || p.weights.extent(3) != kK)
    throw ShapeError("conv2d: weights must be [oc x ic x 3 x 3], got " + p.weights.shape_str());
  const int64_t channels = batched ? x.extent(1) : x.extent(0);
  if (p.weights.extent(1) != channels)
    throw ShapeError("conv2d: input has " + std::to_string(channels) + " channels, weights want " +
                     std::to_string(p.weights.extent(1)));
  if (pad < 0 || pad > 1) throw ValueError("conv2d: pad must be 0 or 1");
  ConvDims d;
  d.B = batched ? x.extent(0) : 1;
  d.C = channels;
  d.H = x.extent(batched ? 2 : 1);
  d.W = x.extent(batched ? 3 : 2);
  d.OC = p.weights.extent(0);
  d.OH = d.H + 2 * pad - (kK - 1);
  d.OW = d.W + 2 * pad - (kK - 1);
  if (d.OH < 1 || d.OW < 1) throw ShapeError("conv2d: input too small for 3x3 kernel");
  return d;
}

// Direct 3x3 kernels: the filter bank stays in registers/L1 and the inner
// loops are contiguous axpy/dot sweeps over image rows. On these layer sizes
// that beats an unrolled-GEMM formulation by keeping every pass cache-hot.

void conv3_fwd_one(const double* x, const ConvDims& d, const double* w, const double* bias,
                   int pad, double* out) {
  for (int64_t oc = 0; oc < d.OC; ++oc) {
    double* plane = out + oc * d.OH * d.OW;
    const double b = bias[oc];
    for (int64_t i = 0; i < d.OH * d.OW; ++i) plane[i] = b;
    for (int64_t ic = 0; ic < d.C; ++ic) {
      const double* img = x + ic * d.H * d.W;
      for (int64_t ky = 0; ky < kK; ++ky)
        for (int64_t kx = 0; kx < kK; ++kx) {
          const double wk = w[((oc * d.C + ic) * kK + ky) * kK + kx];
          if (wk == 0.0) continue;
          const int64_t xlo = std::max<int64_t>(0, pad - kx);
          const int64_t xhi = std::min<int64_t>(d.OW, d.W + pad - kx);
          for (int64_t oy = 0; oy < d.OH; ++oy) {
            const int64_t iy = oy + ky - pad;
            if (iy < 0 || iy >= d.H) continue;
            double* dst = plane + oy * d.OW;
            const double* srcr = img + iy * d.W + (kx - pad);
#pragma omp simd
            for (int64_t ox = xlo; ox < xhi; ++ox) dst[ox] += wk * srcr[ox];
          }
        }
    }
  }
}

void conv3_bwd_x_one(const double* gout, const ConvDims& d, const double* w, int pad,
                     double* gx) {
  // gather form of the transposed correlation; gx must be zeroed by the caller
  for (int64_t ic = 0; ic < d.C; ++ic) {
    double* gplane = gx + ic * d.H * d.W;
    for (int64_t oc = 0; oc < d.OC; ++oc) {
      const double* gp = gout + oc * d.OH * d.OW;
      for (int64_t ky = 0; ky < kK; ++ky)
        for (int64_t kx = 0; kx < kK; ++kx) {
          const double wk = w[((oc * d.C + ic) * kK + ky) * kK + kx];
          if (wk == 0.0) continue;
          // input pixel (iy, ix) receives gout(oy, ox) where iy = oy+ky-pad
          const int64_t xlo = std::max<int64_t>(0, kx - pad);
          const int64_t xhi = std::min<int64_t>(d.W, d.OW + kx - pad);
          for (int64_t iy = std::max<int64_t>(0, ky - pad);
               iy < std::min<int64_t>(d.H, d.OH + ky - pad); ++iy) {
            double* dst = gplane + iy * d.W;
            const double* srcr = gp + (iy - ky + pad) * d.OW - (kx - pad);
#pragma omp simd
            for (int64_t ix = xlo; ix < xhi; ++ix) dst[ix] += wk * srcr[ix];
          }
        }
    }
  }
}

void conv3_bwd_w_one(const double* x, const double* gout, const ConvDims& d, int pad,
                     double* gw) {
  // gw accumulates across calls (batch sum); caller zeroes it once
  for (int64_t oc = 0; oc < d.OC; ++oc) {
    const double* gp = gout + oc * d.OH * d.OW;
    for (int64_t ic = 0; ic < d.C; ++ic) {
      const double* img = x + ic * d.H * d.W;
      for (int64_t ky = 0; ky < kK; ++ky)
        for (int64_t kx = 0; kx < kK; ++kx) {
          const int64_t xlo = std::max<int64_t>(0, pad - kx);
          const int64_t xhi = std::min<int64_t>(d.OW, d.W + pad - kx);
          double acc = 0.0;
          for (int64_t oy = 0; oy < d.OH; ++oy) {
            const int64_t iy = oy + ky - pad;
            if (iy < 0 || iy >= d.H) continue;
            const double* gr = gp + oy * d.OW;
            const double* xr = img + iy * d.W + (kx - pad);
            double row = 0.0;
#pragma omp simd reduction(+ : row)
            for (int64_t ox = xlo; ox < xhi; ++ox) row += gr[ox] * xr[ox];
            acc += row;
          }
          gw[((oc * d.C + ic) * kK + ky) * kK + kx] += acc;
        }
    }
  }
}

Tensor conv_forward_impl(const Tensor& x, const ConvParams& p, int pad, bool batched) {
  const ConvDims d = conv_dims(x, p, pad, batched);
  Tensor out = batched ? Tensor({d.B, d.OC, d.OH, d.OW}) : Tensor({d.OC, d.OH, d.OW});
  const int64_t in_sz = d.C * d.H * d.W, out_sz = d.OC * d.OH * d.OW;
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < d.B; ++b)
    conv3_fwd_one(x.data() + b * in_sz, d, p.weights.data(), p.bias.data(), pad,
                  out.data() + b * out_sz);
  return out;
}

ConvGrads conv_backward_impl(const Tensor& x, const ConvParams& p, const Tensor& grad_out,
                             int pad, bool batched) {
  const ConvDims d = conv_dims(x, p, pad, batched);
  const bool shape_ok =
      batched ? (grad_out.rank() == 4 && grad_out.extent(0) == d.B && grad_out.extent(1) == d.OC &&
                 grad_out.extent(2) == d.OH && grad_out.extent(3) == d.OW)
              : (grad_out.rank() == 3 && grad_out.extent(0) == d.OC &&
                 grad_out.extent(1) == d.OH && grad_out.extent(2) == d.OW);
  if (!shape_ok)
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_str() + " mismatch");

  ConvGrads g;
  g.grad_x = Tensor::zeros_like(x);
  g.grad_weights = Tensor::zeros_like(p.weights);
  g.grad_bias = Tensor({d.OC});
  const int64_t in_sz = d.C * d.H * d.W, out_sz = d.OC * d.OH * d.OW;
  const int64_t plane = d.OH * d.OW;

#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < d.B; ++b)
    conv3_bwd_x_one(grad_out.data() + b * out_sz, d, p.weights.data(), pad,
                    g.grad_x.data() + b * in_sz);

  // batch sums in fixed example order
  for (int64_t b = 0; b < d.B; ++b) {
    conv3_bwd_w_one(x.data() + b * in_sz, grad_out.data() + b * out_sz, d, pad,
                    g.grad_weights.data());
    for (int64_t oc = 0; oc < d.OC; ++oc) {
      const double* gp = grad_out.data() + b * out_sz + oc * plane;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (int64_t i = 0; i < plane; ++i) s += gp[i];
      g.grad_bias[oc] += s;
    }
  }
  return g;
}
}  // namespace

namespace {
// One conv output row: bias + sum over (ic, ky, kx) of shifted input rows.
inline void conv3_row(const double* x, const ConvDims& d, const double* w, double bias,
                      int64_t oc, int64_t oy, double* row) {
  for (int64_t ox = 0; ox < d.OW; ++ox) row[ox] = bias;
  for (int64_t ic = 0; ic < d.C; ++ic) {
    const double* img = x + ic * d.H * d.W;
    for (int64_t ky = 0; ky < kK; ++ky) {
      const int64_t iy = oy + ky - 1;
      if (iy < 0 || iy >= d.H) continue;
      const double* srcrow = img + iy * d.W;
      for (int64_t kx = 0; kx < kK; ++kx) {
        const double wk = w[((oc * d.C + ic) * kK + ky) * kK + kx];
        const int64_t xlo = std::max<int64_t>(0, 1 - kx);
        const int64_t xhi = std::min<int64_t>(d.OW, d.W + 1 - kx);
        const double* srcr = srcrow + (kx - 1);
#pragma omp simd
        for (int64_t ox = xlo; ox < xhi; ++ox) row[ox] += wk * srcr[ox];
      }
    }
  }
}

inline void set_live(std::vector<uint64_t>& bits, int64_t i) {
  bits[static_cast<size_t>(i >> 6)] |= (1ull << (i & 63));
}
inline bool get_live(const std::vector<uint64_t>& bits, int64_t i) {
  return (bits[static_cast<size_t>(i >> 6)] >> (i & 63)) & 1ull;
}
}  // namespace

Tensor conv_block_forward_batch(const Tensor& x, const ConvParams& p, ConvBlockCache* cache) {
  const ConvDims d = conv_dims(x, p, /*pad=*/1, /*batched=*/true);
  const int64_t PH = d.OH / 2, PW = d.OW / 2;
  if (PH < 1 || PW < 1) throw ShapeError("conv_block: input too small to pool");
  Tensor pooled({d.B, d.OC, PH, PW});
  const int64_t act_sz = d.OC * d.OH * d.OW;
  if (cache) {
    cache->x_shape = x.shape();
    cache->act_h = d.OH;
    cache->act_w = d.OW;
    cache->argmax.assign(static_cast<size_t>(pooled.size()), 0);
    cache->live.assign(static_cast<size_t>((d.B * act_sz + 63) / 64), 0);
  }
  const int64_t in_sz = d.C * d.H * d.W;
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < d.B; ++b) {
    std::vector<double> rows(static_cast<size_t>(2 * d.OW));
    const double* xb = x.data() + b * in_sz;
    for (int64_t oc = 0; oc < d.OC; ++oc) {
      for (int64_t k = 0; k < PH; ++k) {
        conv3_row(xb, d, p.weights.data(), p.bias[oc], oc, 2 * k, rows.data());
        conv3_row(xb, d, p.weights.data(), p.bias[oc], oc, 2 * k + 1, rows.data() + d.OW);
        // relu in the ring buffer, then pool the pair of rows
        const int64_t act_base = (b * d.OC + oc) * d.OH * d.OW;
        for (int64_t r = 0; r < 2; ++r)
          for (int64_t ox = 0; ox < d.OW; ++ox) {
            double& v = rows[static_cast<size_t>(r * d.OW + ox)];
            if (v > 0.0) {
              if (cache) set_live(cache->live, act_base + (2 * k + r) * d.OW + ox);
            } else {
              v = 0.0;
            }
          }
        double* prow = pooled.data() + ((b * d.OC + oc) * PH + k) * PW;
        for (int64_t j = 0; j < PW; ++j) {
          int64_t br = 0, bx = 2 * j;
          double bv = rows[static_cast<size_t>(2 * j)];
          for (int64_t r = 0; r < 2; ++r)
            for (int64_t dx = 0; dx < 2; ++dx)
              if (rows[static_cast<size_t>(r * d.OW + 2 * j + dx)] > bv) {
                bv = rows[static_cast<size_t>(r * d.OW + 2 * j + dx)];
                br = r;
                bx = 2 * j + dx;
              }
          prow[j] = bv;
          if (cache)
            cache->argmax[static_cast<size_t>(((b * d.OC + oc) * PH + k) * PW + j)] =
                static_cast<int32_t>((2 * k + br) * d.OW + bx);  // in-plane act index
        }
      }
    }
  }
  return pooled;
}

Tensor conv_block_backward_batch(const Tensor& x, const ConvParams& p,
                                 const ConvBlockCache& cache, const Tensor& grad_pooled,
                                 ConvParams& grad_accum) {
  const ConvDims d = conv_dims(x, p, /*pad=*/1, /*batched=*/true);
  const int64_t PH = d.OH / 2, PW = d.OW / 2;
  if (!grad_pooled.same_shape(cache.pooled) &&
      !(grad_pooled.rank() == 4 && grad_pooled.extent(0) == d.B && grad_pooled.extent(1) == d.OC &&
        grad_pooled.extent(2) == PH && grad_pooled.extent(3) == PW))
    throw ShapeError("conv_block_backward: grad shape mismatch");

  Tensor grad_x = Tensor::zeros_like(x);
  const int64_t in_sz = d.C * d.H * d.W;
  const int64_t act_plane = d.OH * d.OW;
  const int64_t act_sz = d.OC * act_plane;

  // fixed-size example chunks keep the weight-grad reduction order independent
  // of how many threads run; chunk partials are summed in chunk order below
  constexpr int64_t kChunk = 8;
  const int64_t nchunks = (d.B + kChunk - 1) / kChunk;
  const int64_t wsz = p.weights.size();
  std::vector<double> gw_part(static_cast<size_t>(nchunks * wsz), 0.0);
  std::vector<double> gb_part(static_cast<size_t>(nchunks * d.OC), 0.0);

#pragma omp parallel for schedule(static)
  for (int64_t chunk = 0; chunk < nchunks; ++chunk) {
    std::vector<double> gout(static_cast<size_t>(act_sz));
    double* gw = gw_part.data() + chunk * wsz;
    double* gb = gb_part.data() + chunk * d.OC;
    for (int64_t b = chunk * kChunk; b < std::min(d.B, (chunk + 1) * kChunk); ++b) {
      // rebuild the relu-masked, pool-routed gradient of the act map
      std::fill(gout.begin(), gout.end(), 0.0);
      const int64_t act_base = b * act_sz;
      for (int64_t oc = 0; oc < d.OC; ++oc)
        for (int64_t k = 0; k < PH; ++k)
          for (int64_t j = 0; j < PW; ++j) {
            const int64_t pidx = ((b * d.OC + oc) * PH + k) * PW + j;
            const double g = grad_pooled[pidx];
            if (g == 0.0) continue;
            const int64_t ai = oc * act_plane + cache.argmax[static_cast<size_t>(pidx)];
            if (get_live(cache.live, act_base + ai)) gout[static_cast<size_t>(ai)] += g;
          }
      conv3_bwd_x_one(gout.data(), d, p.weights.data(), 1, grad_x.data() + b * in_sz);
      conv3_bwd_w_one(x.data() + b * in_sz, gout.data(), d, 1, gw);
      for (int64_t oc = 0; oc < d.OC; ++oc) {
        const double* gp = gout.data() + oc * act_plane;
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (int64_t i = 0; i < act_plane; ++i) s += gp[i];
        gb[oc] += s;
      }
    }
  }
  for (int64_t chunk = 0; chunk < nchunks; ++chunk) {
    const double* gw = gw_part.data() + chunk * wsz;
    const double* gb = gb_part.data() + chunk * d.OC;
    for (int64_t i = 0; i < wsz; ++i) grad_accum.weights[i] += gw[i];
    for (int64_t i = 0; i < d.OC; ++i) grad_accum.bias[i] += gb[i];
  }
  return grad_x;
}

ConvParams make_conv_params(Rng& rng, int64_t out_ch, int64_t in_ch) {
  ConvParams p;
  p.weights = init_fan_scaled(rng, {out_ch, in_ch, kK, kK}, in_ch * kK * kK, out_ch * kK * kK);
  p.bias = Tensor({out_ch});
  return p;
}

Tensor conv2d_forward(const Tensor& x, const ConvParams& p, int pad) {
  return conv_forward_impl(x, p, pad, /*batched=*/false);
}

ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& grad_out, int pad) {
  return conv_backward_impl(x, p, grad_out, pad, /*batched=*/false);
}

Tensor conv2d_forward_batch(const Tensor& x, const ConvParams& p, int pad) {
  return conv_forward_impl(x, p, pad, /*batched=*/true);
}

ConvGrads conv2d_backward_batch(const Tensor& x, const ConvParams& p, const Tensor& grad_out,
                                int pad) {
  return conv_backward_impl(x, p, grad_out, pad, /*batched=*/true);
}

PoolResult maxpool2_forward(const Tensor& x) {
  if (x.rank() != 3 && x.rank() != 4)
    throw ShapeError("maxpool2: input must be [C x H x W] or [B x C x H x W]");
  const int64_t H = x.extent(x.rank() - 2), W = x.extent(x.rank() - 1);
  int64_t C = 1;  // leading dims collapse into channels
  for (int a = 0; a < x.rank() - 2; ++a) C *= x.extent(a);
  if (H < 2 || W < 2) throw ShapeError("maxpool2: input smaller than the 2x2 window");
  const int64_t OH = H / 2, OW = W / 2;
  std::vector<int64_t> out_shape(x.shape());
  out_shape[static_cast<size_t>(x.rank() - 2)] = OH;
  out_shape[static_cast<size_t>(x.rank() - 1)] = OW;
  PoolResult r;
  r.values = Tensor(out_shape);
  r.argmax.assign(static_cast<size_t>(C * OH * OW), 0);
  const double* px = x.data();
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t oy = 0; oy < OH; ++oy) {
      for (int64_t ox = 0; ox < OW; ++ox) {
        int64_t best = (c * H + 2 * oy) * W + 2 * ox;
        double bv = px[best];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int64_t idx = (c * H + 2 * oy + dy) * W + 2 * ox + dx;
            if (px[idx] > bv) {  // strict: ties keep the first row-major element
              bv = px[idx];
              best = idx;
            }
          }
        r.values[(c * OH + oy) * OW + ox] = bv;
        r.argmax[static_cast<size_t>((c * OH + oy) * OW + ox)] = static_cast<int32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const PoolResult& fwd, const std::vector<int64_t>& x_shape,
                         const Tensor& grad_out) {
  if (!fwd.values.same_shape(grad_out))
    throw ShapeError("maxpool2_backward: grad_out shape mismatch");
  Tensor gx{x_shape};
  const double* go = grad_out.data();
  double* p = gx.data();
  const int64_t n = grad_out.size();
  for (int64_t i = 0; i < n; ++i) p[fwd.argmax[static_cast<size_t>(i)]] += go[i];
  return gx;
}

DenseParams make_dense_params(Rng& rng, int64_t out, int64_t in) {
  DenseParams p;
  p.weights = init_fan_scaled(rng, {out, in}, in, out);
  p.bias = Tensor({out});
  return p;
}

namespace {
// A rank-1 vector is a batch of one.
std::pair<int64_t, int64_t> batch_dims(const Tensor& x, const char* op) {
  if (x.rank() == 1) return {1, x.extent(0)};
  if (x.rank() == 2) return {x.extent(0), x.extent(1)};
  throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " + x.shape_str());
}
}  // namespace

Tensor dense_forward(const Tensor& x, const DenseParams& p) {
  const auto [B, in] = batch_dims(x, "dense_forward");
  const int64_t out = p.weights.extent(0);
  if (p.weights.extent(1) != in)
    throw ShapeError("dense_forward: input width " + std::to_string(in) + " vs weights " +
                     p.weights.shape_str());
  Tensor y = x.rank() == 1 ? Tensor({out}) : Tensor({B, out});
  gemm_nt(B, out, in, x.data(), p.weights.data(), y.data());
  double* py = y.data();
  const double* pb = p.bias.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < out; ++o) py[b * out + o] += pb[o];
  return y;
}

DenseGrads dense_backward(const Tensor& x, const DenseParams& p, const Tensor& grad_out) {
  const auto [B, in] = batch_dims(x, "dense_backward");
  const auto [Bg, out] = batch_dims(grad_out, "dense_backward");
  if (Bg != B || out != p.weights.extent(0) || in != p.weights.extent(1))
    throw ShapeError("dense_backward: shape mismatch");
  DenseGrads g;
  g.grad_x = Tensor::zeros_like(x);
  gemm_nn(B, in, out, grad_out.data(), p.weights.data(), g.grad_x.data());
  g.grad_weights = Tensor::zeros_like(p.weights);
  gemm_tn(out, in, B, grad_out.data(), x.data(), g.grad_weights.data());
  g.grad_bias = Tensor({out});
  const double* go = grad_out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < out; ++o) g.grad_bias[o] += go[b * out + o];
  return g;
}

Tensor relu(const Tensor& x) {
  return ew_map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor relu_backward(const Tensor& y, const Tensor& grad_out) {
  if (!y.same_shape(grad_out)) throw ShapeError("relu_backward: shape mismatch");
  Tensor g = Tensor::zeros_like(y);
  const double* py = y.data();
  const double* go = grad_out.data();
  double* pg = g.data();
  const int64_t n = y.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) pg[i] = py[i] > 0.0 ? go[i] : 0.0;
  return g;
}

Tensor dropout_forward(const Tensor& x, double keep, Rng& rng, bool train, DropoutMask* mask) {
  if (!(keep > 0.0 && keep <= 1.0)) throw ValueError("dropout: keep must be in (0, 1]");
  if (!train) {
    if (mask) mask->mask = Tensor();
    return x;
  }
  Tensor m = Tensor::zeros_like(x);
  const double inv = 1.0 / keep;
  double* pm = m.data();
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) pm[i] = rng.next_unit() < keep ? inv : 0.0;
  Tensor y = ew_mul(x, m);
  if (mask) mask->mask = std::move(m);
  return y;
}

Tensor dropout_backward(const DropoutMask& mask, const Tensor& grad_out) {
  if (mask.mask.size() == 0) return grad_out;  // eval mode passthrough
  return ew_mul(grad_out, mask.mask);
}

XentResult softmax_xent_forward(const Tensor& logits, std::span<const int> labels) {
  const auto [B, K] = batch_dims(logits, "softmax_xent");
  if (static_cast<int64_t>(labels.size()) != B)
    throw ShapeError("softmax_xent: one label per row required");
  XentResult r;
  r.probs = Tensor::zeros_like(logits);
  const double* pl = logits.data();
  double* pp = r.probs.data();
  double loss = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const int label = labels[static_cast<size_t>(b)];
    if (label < 0 || label >= K)
      throw ValueError("softmax_xent: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(K) + ")");
    const double* row = pl + b * K;
    double m = row[0];
    for (int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
    double s = 0.0;
    for (int64_t k = 0; k < K; ++k) s += std::exp(row[k] - m);
    const double logs = std::log(s);
    for (int64_t k = 0; k < K; ++k) pp[b * K + k] = std::exp(row[k] - m) / s;
    loss += -(row[label] - m) + logs;
  }
  r.loss = loss / static_cast<double>(B);
  return r;
}

Tensor softmax_xent_backward(const XentResult& fwd, std::span<const int> labels, double scale) {
  const auto [B, K] = batch_dims(fwd.probs, "softmax_xent_backward");
  Tensor g = Tensor::zeros_like(fwd.probs);
  const double* pp = fwd.probs.data();
  double* pg = g.data();
  const double f = scale / static_cast<double>(B);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t k = 0; k < K; ++k)
      pg[b * K + k] = (pp[b * K + k] - (labels[static_cast<size_t>(b)] == k ? 1.0 : 0.0)) * f;
  return g;
}

}  // namespace seqstn
