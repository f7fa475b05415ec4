#include "seqstn/locnet.hpp"

#include <cmath>
#include <cstring>

namespace seqstn {

namespace {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// pre = x W^T + h U^T + b, then the gate nonlinearity.
Tensor gate(const Tensor& x, const Tensor& h, const Tensor& w, const Tensor& u, const Tensor& b,
            bool is_tanh) {
  const int64_t B = x.extent(0), in = x.extent(1), cells = w.extent(0);
  Tensor a({B, cells});
  gemm_nt(B, cells, in, x.data(), w.data(), a.data());
  gemm_nt(B, cells, cells, h.data(), u.data(), a.data(), /*accumulate=*/true);
  double* pa = a.data();
  const double* pb = b.data();
  for (int64_t r = 0; r < B; ++r)
    for (int64_t c = 0; c < cells; ++c) {
      const double z = pa[r * cells + c] + pb[c];
      pa[r * cells + c] = is_tanh ? std::tanh(z) : sigmoid(z);
    }
  return a;
}

Tensor as_batch(const Tensor& t, const char* what) {
  if (t.rank() == 1) return t.reshaped({1, t.extent(0)});
  if (t.rank() == 2) return t;
  throw ShapeError(std::string(what) + ": expected rank 1 or 2, got " + t.shape_str());
}
}  // namespace

LstmParams make_lstm_params(Rng& rng, int64_t cells, int64_t in) {
  LstmParams p;
  p.wi = init_fan_scaled(rng, {cells, in}, in, cells);
  p.wf = init_fan_scaled(rng, {cells, in}, in, cells);
  p.wo = init_fan_scaled(rng, {cells, in}, in, cells);
  p.wg = init_fan_scaled(rng, {cells, in}, in, cells);
  p.ui = init_fan_scaled(rng, {cells, cells}, cells, cells);
  p.uf = init_fan_scaled(rng, {cells, cells}, cells, cells);
  p.uo = init_fan_scaled(rng, {cells, cells}, cells, cells);
  p.ug = init_fan_scaled(rng, {cells, cells}, cells, cells);
  p.bi = Tensor({cells});
  p.bf = Tensor::full({cells}, 1.0);
  p.bo = Tensor({cells});
  p.bg = Tensor({cells});
  return p;
}

LstmState lstm_step(const Tensor& x_in, const LstmState& prev, const LstmParams& p,
                    LstmCache* cache) {
  const bool single = x_in.rank() == 1;
  const Tensor x = as_batch(x_in, "lstm_step");
  const Tensor hp = as_batch(prev.h, "lstm_step");
  const Tensor cp = as_batch(prev.c, "lstm_step");
  const int64_t B = x.extent(0), cells = p.wi.extent(0);
  if (x.extent(1) != p.wi.extent(1) || hp.extent(1) != cells || cp.extent(1) != cells ||
      hp.extent(0) != B || cp.extent(0) != B)
    throw ShapeError("lstm_step: operand dimensions disagree");

  Tensor gi = gate(x, hp, p.wi, p.ui, p.bi, false);
  Tensor gf = gate(x, hp, p.wf, p.uf, p.bf, false);
  Tensor go = gate(x, hp, p.wo, p.uo, p.bo, false);
  Tensor gg = gate(x, hp, p.wg, p.ug, p.bg, true);

  Tensor c({B, cells}), h({B, cells}), tc({B, cells});
  const int64_t n = B * cells;
  for (int64_t i = 0; i < n; ++i) {
    c[i] = gf[i] * cp[i] + gi[i] * gg[i];
    tc[i] = std::tanh(c[i]);
    h[i] = go[i] * tc[i];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = hp;
    cache->c_prev = cp;
    cache->gi = std::move(gi);
    cache->gf = std::move(gf);
    cache->go = std::move(go);
    cache->gg = std::move(gg);
    cache->tanh_c = tc;
  }
  LstmState out;
  out.c = single ? c.reshaped({cells}) : std::move(c);
  out.h = single ? h.reshaped({cells}) : std::move(h);
  return out;
}

LstmStepGrads lstm_step_backward(const LstmCache& k, const LstmParams& p, const Tensor& grad_h_in,
                                 const Tensor& grad_c_in, LstmParams& ga) {
  const bool single = grad_h_in.rank() == 1;
  const Tensor gh = as_batch(grad_h_in, "lstm_step_backward");
  const Tensor gc_in = as_batch(grad_c_in, "lstm_step_backward");
  const int64_t B = k.x.extent(0), in = k.x.extent(1), cells = p.wi.extent(0);
  if (gh.extent(0) != B || gh.extent(1) != cells)
    throw ShapeError("lstm_step_backward: grad_h shape mismatch");

  const int64_t n = B * cells;
  Tensor dai({B, cells}), daf({B, cells}), dao({B, cells}), dag({B, cells}), dcp({B, cells});
  for (int64_t i = 0; i < n; ++i) {
    const double tc = k.tanh_c[i];
    const double dO = gh[i] * tc;
    const double dc = gc_in[i] + gh[i] * k.go[i] * (1.0 - tc * tc);
    const double di = dc * k.gg[i];
    const double df = dc * k.c_prev[i];
    const double dg = dc * k.gi[i];
    dcp[i] = dc * k.gf[i];
    dai[i] = di * k.gi[i] * (1.0 - k.gi[i]);
    daf[i] = df * k.gf[i] * (1.0 - k.gf[i]);
    dao[i] = dO * k.go[i] * (1.0 - k.go[i]);
    dag[i] = dg * (1.0 - k.gg[i] * k.gg[i]);
  }

  LstmStepGrads out;
  out.grad_x = Tensor({B, in});
  Tensor dhp({B, cells});
  const Tensor* da[4] = {&dai, &daf, &dao, &dag};
  const Tensor* w[4] = {&p.wi, &p.wf, &p.wo, &p.wg};
  const Tensor* u[4] = {&p.ui, &p.uf, &p.uo, &p.ug};
  Tensor* gw[4] = {&ga.wi, &ga.wf, &ga.wo, &ga.wg};
  Tensor* gu[4] = {&ga.ui, &ga.uf, &ga.uo, &ga.ug};
  Tensor* gb[4] = {&ga.bi, &ga.bf, &ga.bo, &ga.bg};
  for (int q = 0; q < 4; ++q) {
    gemm_nn(B, in, cells, da[q]->data(), w[q]->data(), out.grad_x.data(), /*accumulate=*/true);
    gemm_nn(B, cells, cells, da[q]->data(), u[q]->data(), dhp.data(), /*accumulate=*/true);
    gemm_tn(cells, in, B, da[q]->data(), k.x.data(), gw[q]->data(), /*accumulate=*/true);
    gemm_tn(cells, cells, B, da[q]->data(), k.h_prev.data(), gu[q]->data(), /*accumulate=*/true);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < cells; ++c) (*gb[q])[c] += (*da[q])(b, c);
  }
  out.grad_prev.h = single ? dhp.reshaped({cells}) : std::move(dhp);
  out.grad_prev.c = single ? dcp.reshaped({cells}) : std::move(dcp);
  if (single) out.grad_x = out.grad_x.reshaped({in});
  return out;
}

int64_t locnet_feature_dim(int64_t h, int64_t w, int64_t filters) {
  if (h < 16 || w < 16)
    throw ShapeError("locnet: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " too small for 4 pooling stages (needs >= 16 px per side)");
  for (int l = 0; l < 4; ++l) {
    h /= 2;
    w /= 2;
  }
  return filters * h * w;
}

LocNetParams make_locnet_params(Rng& rng, int64_t filters, int64_t cells, int64_t canvas_h,
                                int64_t canvas_w) {
  const int64_t feat = locnet_feature_dim(canvas_h, canvas_w, filters);
  LocNetParams p;
  p.conv[0] = make_conv_params(rng, filters, 1);
  for (int l = 1; l < 4; ++l) p.conv[static_cast<size_t>(l)] = make_conv_params(rng, filters, filters);
  p.lstm = make_lstm_params(rng, cells, feat);
  // Training starts from the identity transform: zero head weights, identity
  // bias. Every emitted theta is then the identity regardless of input.
  p.head.weights = Tensor({6, cells});
  p.head.bias = Tensor::from({6}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  return p;
}

LocNetParams zeros_like_locnet(const LocNetParams& p) {
  LocNetParams z;
  for (size_t l = 0; l < 4; ++l) {
    z.conv[l].weights = Tensor::zeros_like(p.conv[l].weights);
    z.conv[l].bias = Tensor::zeros_like(p.conv[l].bias);
  }
  auto zl = [](const Tensor& t) { return Tensor::zeros_like(t); };
  z.lstm.wi = zl(p.lstm.wi); z.lstm.wf = zl(p.lstm.wf); z.lstm.wo = zl(p.lstm.wo); z.lstm.wg = zl(p.lstm.wg);
  z.lstm.ui = zl(p.lstm.ui); z.lstm.uf = zl(p.lstm.uf); z.lstm.uo = zl(p.lstm.uo); z.lstm.ug = zl(p.lstm.ug);
  z.lstm.bi = zl(p.lstm.bi); z.lstm.bf = zl(p.lstm.bf); z.lstm.bo = zl(p.lstm.bo); z.lstm.bg = zl(p.lstm.bg);
  z.head.weights = zl(p.head.weights);
  z.head.bias = zl(p.head.bias);
  return z;
}

Tensor extract_features(const Tensor& u, const std::array<ConvParams, 4>& conv) {
  if (u.rank() != 3 || u.extent(0) != 1)
    throw ShapeError("extract_features: canvas must be [1 x H x W]");
  FeatCache cache;
  Tensor f = extract_features_batch(u.reshaped({1, u.extent(1), u.extent(2)}), conv, cache);
  return f.reshaped({f.size()});
}

Tensor extract_features_batch(const Tensor& canvases, const std::array<ConvParams, 4>& conv,
                              FeatCache& cache) {
  if (canvases.rank() != 3) throw ShapeError("extract_features_batch: canvases must be [B x H x W]");
  const int64_t B = canvases.extent(0), H = canvases.extent(1), W = canvases.extent(2);
  const int64_t F = locnet_feature_dim(H, W, conv[0].weights.extent(0));
  cache.input = canvases.reshaped({B, 1, H, W});
  Tensor cur = cache.input;
  for (size_t l = 0; l < 4; ++l) {
    Tensor act = relu(conv2d_forward_batch(cur, conv[l], /*pad=*/1));
    PoolResult pr = maxpool2_forward(act);
    cur = pr.values;
    cache.act[l] = std::move(act);
    cache.pool[l] = std::move(pr);
  }
  return cur.reshaped({B, F});
}

Tensor extract_features_backward_batch(const FeatCache& cache,
                                       const std::array<ConvParams, 4>& conv,
                                       const Tensor& grad_feat,
                                       std::array<ConvParams, 4>& grad_accum) {
  const int64_t B = grad_feat.extent(0);
  const int64_t H = cache.input.extent(2), W = cache.input.extent(3);
  Tensor g = grad_feat.reshaped(cache.pool[3].values.shape());
  for (int l = 3; l >= 0; --l) {
    const size_t sl = static_cast<size_t>(l);
    const Tensor& input = l == 0 ? cache.input : cache.pool[sl - 1].values;
    Tensor ga_pool = maxpool2_backward(cache.pool[sl], cache.act[sl].shape(), g);
    Tensor ga_relu = relu_backward(cache.act[sl], ga_pool);
    ConvGrads cg = conv2d_backward_batch(input, conv[sl], ga_relu, /*pad=*/1);
    for (int64_t i = 0; i < cg.grad_weights.size(); ++i)
      grad_accum[sl].weights[i] += cg.grad_weights[i];
    for (int64_t i = 0; i < cg.grad_bias.size(); ++i) grad_accum[sl].bias[i] += cg.grad_bias[i];
    g = std::move(cg.grad_x);
  }
  return g.reshaped({B, H, W});
}

std::vector<Tensor> localize_sequence_batch(const Tensor& canvases, const LocNetParams& p,
                                            int steps, LocSeqCache& cache) {
  if (steps < 1) throw ValueError("localize_sequence: steps must be >= 1");
  if (canvases.rank() != 3) throw ShapeError("localize_sequence: canvases must be [B x H x W]");
  const int64_t B = canvases.extent(0), H = canvases.extent(1), W = canvases.extent(2);
  const int64_t cells = p.lstm.wi.extent(0);

  cache.batch = B;
  cache.canvas_h = H;
  cache.canvas_w = W;
  cache.fmap = extract_features_batch(canvases, p.conv, cache.feat);

  cache.steps.assign(static_cast<size_t>(steps), LstmCache{});
  cache.h.clear();
  cache.thetas.clear();
  LstmState state{Tensor({B, cells}), Tensor({B, cells})};
  std::vector<Tensor> thetas;
  for (int t = 0; t < steps; ++t) {
    state = lstm_step(cache.fmap, state, p.lstm, &cache.steps[static_cast<size_t>(t)]);
    cache.h.push_back(state.h);
    Tensor th = dense_forward(state.h, p.head);
    cache.thetas.push_back(th);
    thetas.push_back(std::move(th));
  }
  return thetas;
}

Tensor localize_sequence_backward_batch(const LocSeqCache& cache, const LocNetParams& p,
                                        const std::vector<Tensor>& grad_thetas,
                                        LocNetParams& ga) {
  const int steps = static_cast<int>(cache.steps.size());
  if (static_cast<int>(grad_thetas.size()) != steps)
    throw ShapeError("localize_sequence_backward: one grad per emitted theta required");
  const int64_t B = cache.batch, F = cache.fmap.extent(1);
  const int64_t cells = p.lstm.wi.extent(0);

  Tensor gfmap({B, F});
  Tensor dh({B, cells}), dc({B, cells});
  for (int t = steps - 1; t >= 0; --t) {
    const size_t st = static_cast<size_t>(t);
    DenseGrads hg = dense_backward(cache.h[st], p.head, grad_thetas[st]);
    for (int64_t i = 0; i < hg.grad_weights.size(); ++i) ga.head.weights[i] += hg.grad_weights[i];
    for (int64_t i = 0; i < hg.grad_bias.size(); ++i) ga.head.bias[i] += hg.grad_bias[i];
    Tensor gh = ew_add(dh, hg.grad_x);
    LstmStepGrads sg = lstm_step_backward(cache.steps[st], p.lstm, gh, dc, ga.lstm);
    for (int64_t i = 0; i < gfmap.size(); ++i) gfmap[i] += sg.grad_x[i];
    dh = std::move(sg.grad_prev.h);
    dc = std::move(sg.grad_prev.c);
  }

  return extract_features_backward_batch(cache.feat, p.conv, gfmap, ga.conv);
}

std::vector<AffineParams> localize_sequence(const Tensor& u, const LocNetParams& p, int steps,
                                            LocSeqCache& cache) {
  if (u.rank() != 3 || u.extent(0) != 1)
    throw ShapeError("localize_sequence: canvas must be [1 x H x W]");
  std::vector<Tensor> thetas =
      localize_sequence_batch(u.reshaped({1, u.extent(1), u.extent(2)}), p, steps, cache);
  std::vector<AffineParams> out;
  out.reserve(thetas.size());
  for (const Tensor& t : thetas) out.push_back(AffineParams::from_row(t, 0));
  return out;
}

LocNetBackwardResult localize_sequence_backward(const LocSeqCache& cache, const LocNetParams& p,
                                                const std::vector<Tensor>& grad_thetas) {
  LocNetBackwardResult r;
  r.grads = zeros_like_locnet(p);
  std::vector<Tensor> rows;
  rows.reserve(grad_thetas.size());
  for (const Tensor& g : grad_thetas)
    rows.push_back(g.rank() == 1 ? g.reshaped({1, 6}) : g);
  Tensor gb = localize_sequence_backward_batch(cache, p, rows, r.grads);
  r.grad_u = gb.reshaped({1, cache.canvas_h, cache.canvas_w});
  return r;
}

}  // namespace seqstn
