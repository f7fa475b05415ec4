#include "seqstn/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace seqstn {

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "lstm-stn-cnn") return ModelKind::LstmStnCnn;
  if (name == "ffn-stn-cnn") return ModelKind::FfnStnCnn;
  if (name == "cnn") return ModelKind::PlainCnn;
  throw ValueError("unknown model '" + name + "' (expected lstm-stn-cnn | ffn-stn-cnn | cnn)");
}

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::LstmStnCnn: return "lstm-stn-cnn";
    case ModelKind::FfnStnCnn: return "ffn-stn-cnn";
    case ModelKind::PlainCnn: return "cnn";
  }
  return "?";
}

void Model::zero_grads() {
  for (ParamRef& r : params()) r.grad->fill(0.0);
}

namespace {

Tensor slice_canvas(const Tensor& canvases, int64_t b) {
  const int64_t H = canvases.extent(1), W = canvases.extent(2);
  const double* src = canvases.data() + b * H * W;
  return Tensor::from({1, H, W}, std::vector<double>(src, src + H * W));
}

void check_canvases(const Tensor& canvases, int side) {
  if (canvases.rank() != 3 || canvases.extent(1) != side || canvases.extent(2) != side)
    throw ShapeError("expected canvases [B x " + std::to_string(side) + " x " +
                     std::to_string(side) + "], got " + canvases.shape_str());
}

// conv -> relu -> maxpool -> flatten, the shared classifier trunk shape.
int64_t trunk_feat_dim(int64_t side, int64_t filters) { return filters * (side / 2) * (side / 2); }

struct TrunkCache {
  Tensor input;  // [B x 1 x s x s]
  Tensor act;    // [B x F x s x s] post-relu
  PoolResult pool;
};

// Whole-batch conv trunk producing flattened rows [B x feat].
Tensor trunk_forward(const Tensor& inputs, const ConvParams& conv, TrunkCache* cache) {
  const int64_t B = inputs.extent(0);
  const int64_t feat = trunk_feat_dim(inputs.extent(2), conv.weights.extent(0));
  Tensor act = relu(conv2d_forward_batch(inputs, conv, 1));
  PoolResult pr = maxpool2_forward(act);
  Tensor rows = pr.values.reshaped({B, feat});
  if (cache) {
    cache->input = inputs;
    cache->act = std::move(act);
    cache->pool = std::move(pr);
  }
  return rows;
}

// Backward through the trunk: grad wrt the inputs [B x 1 x s x s].
Tensor trunk_backward(const TrunkCache& cache, const ConvParams& conv, const Tensor& grad_rows,
                      ConvParams& grad_accum) {
  Tensor g = grad_rows.reshaped(cache.pool.values.shape());
  Tensor gp = maxpool2_backward(cache.pool, cache.act.shape(), g);
  Tensor gr = relu_backward(cache.act, gp);
  ConvGrads cg = conv2d_backward_batch(cache.input, conv, gr, 1);
  for (int64_t i = 0; i < cg.grad_weights.size(); ++i)
    grad_accum.weights[i] += cg.grad_weights[i];
  for (int64_t i = 0; i < cg.grad_bias.size(); ++i) grad_accum.bias[i] += cg.grad_bias[i];
  return std::move(cg.grad_x);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

int pad_to_multiple(int side, int d) { return (side + d - 1) / d * d; }

// Zero-pad a [1 x s x s] image at the bottom/right (used for d=3 on 100x100).
Tensor pad_image(const Tensor& x, int64_t target) {
  const int64_t s = x.extent(1);
  if (s == target) return x;
  Tensor out({1, target, target});
  for (int64_t y = 0; y < s; ++y)
    std::memcpy(out.data() + y * target, x.data() + y * s, static_cast<size_t>(s) * sizeof(double));
  return out;
}

Tensor unpad_image(const Tensor& g, int64_t side) {
  if (g.extent(1) == side) return g;
  Tensor out({1, side, side});
  for (int64_t y = 0; y < side; ++y)
    std::memcpy(out.data() + y * side, g.data() + y * g.extent(2),
                static_cast<size_t>(side) * sizeof(double));
  return out;
}

// ---------------------------------------------------------------------------
// LSTM-STN-CNN: recurrent localization, one glimpse per step, one classifier
// shared across steps, head t supervised by the t-th digit in reading order.
// ---------------------------------------------------------------------------

struct LstmStnCnnModel final : Model {
  ModelConfig cfg;
  LocNetParams loc;
  ConvParams cconv;
  DenseParams cfc1, cfc2;
  // grad mirrors
  LocNetParams g_loc;
  ConvParams g_cconv;
  DenseParams g_cfc1, g_cfc2;

  LstmStnCnnModel(const ModelConfig& c, uint64_t seed) : cfg(c) {
    if (cfg.glimpse % cfg.d != 0)
      throw ValueError("d=" + std::to_string(cfg.d) + " does not divide the glimpse size " +
                       std::to_string(cfg.glimpse));
    Rng rng(seed);
    loc = make_locnet_params(rng, cfg.loc_filters, cfg.lstm_cells, cfg.canvas, cfg.canvas);
    cconv = make_conv_params(rng, cfg.cls_filters, 1);
    const int64_t feat = trunk_feat_dim(cfg.glimpse / cfg.d, cfg.cls_filters);
    cfc1 = make_dense_params(rng, cfg.fc_width, feat);
    cfc2 = make_dense_params(rng, 10, cfg.fc_width);
    g_loc = zeros_like_locnet(loc);
    g_cconv.weights = Tensor::zeros_like(cconv.weights);
    g_cconv.bias = Tensor::zeros_like(cconv.bias);
    g_cfc1 = {Tensor::zeros_like(cfc1.weights), Tensor::zeros_like(cfc1.bias)};
    g_cfc2 = {Tensor::zeros_like(cfc2.weights), Tensor::zeros_like(cfc2.bias)};
  }

  ModelKind kind() const override { return ModelKind::LstmStnCnn; }
  const ModelConfig& config() const override { return cfg; }

  struct StepCache {
    std::vector<SampleGrid> grid;   // per example
    Tensor ds;                      // downsampled glimpses [B x 1 x g' x g']
    TrunkCache trunk;
    DropoutMask drop;
    Tensor flat_dropped;            // [B x feat]
    Tensor a1;                      // post-relu fc1
    XentResult xent;
  };

  struct RunCache {
    LocSeqCache loc;
    std::vector<Tensor> canvas;     // [1 x H x W] per example
    std::vector<StepCache> step;
  };

  std::array<Tensor, 4> run(const Tensor& canvases, bool train_dropout, uint64_t seed,
                            RunCache* cache) {
    check_canvases(canvases, cfg.canvas);
    const int64_t B = canvases.extent(0);
    LocSeqCache local_loc;
    LocSeqCache& lc = cache ? cache->loc : local_loc;
    std::vector<Tensor> thetas = localize_sequence_batch(canvases, loc, cfg.steps, lc);

    std::vector<Tensor> slices(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) slices[static_cast<size_t>(b)] = slice_canvas(canvases, b);
    if (cache) {
      cache->canvas = slices;
      cache->step.assign(static_cast<size_t>(cfg.steps), StepCache{});
    }

    std::array<Tensor, 4> logits;
    const int64_t gside = cfg.glimpse / cfg.d;
    for (int t = 0; t < cfg.steps; ++t) {
      StepCache local_sc;
      StepCache& sc = cache ? cache->step[static_cast<size_t>(t)] : local_sc;
      sc.grid.assign(static_cast<size_t>(B), SampleGrid{});
      sc.ds = Tensor({B, 1, gside, gside});
#pragma omp parallel for schedule(static)
      for (int64_t b = 0; b < B; ++b) {
        const size_t sb = static_cast<size_t>(b);
        const AffineParams th = AffineParams::from_row(thetas[static_cast<size_t>(t)], b);
        sc.grid[sb] = affine_grid(th, cfg.glimpse, cfg.glimpse);
        Tensor v = bilinear_sample(slices[sb], sc.grid[sb]);
        Tensor ds = avg_downsample(v, cfg.d);
        std::memcpy(sc.ds.data() + b * gside * gside, ds.data(),
                    static_cast<size_t>(gside * gside) * sizeof(double));
      }
      Tensor rows = trunk_forward(sc.ds, cconv, cache ? &sc.trunk : nullptr);
      Rng drop_rng(Rng::derive(seed, static_cast<uint64_t>(t)));
      Tensor dropped =
          dropout_forward(rows, cfg.dropout_keep, drop_rng, train_dropout, &sc.drop);
      Tensor a1 = relu(dense_forward(dropped, cfc1));
      logits[static_cast<size_t>(t)] = dense_forward(a1, cfc2);
      if (cache) {
        sc.flat_dropped = std::move(dropped);
        sc.a1 = std::move(a1);
      }
    }
    return logits;
  }

  std::array<Tensor, 4> forward(const Tensor& canvases) override {
    return run(canvases, /*train_dropout=*/false, 0, nullptr);
  }

  double loss_and_backward(const Tensor& canvases, const std::vector<std::array<int, 4>>& labels,
                           uint64_t seed, bool dropout, int64_t* out_wrong) override {
    const int64_t B = canvases.extent(0);
    if (static_cast<int64_t>(labels.size()) != B)
      throw ShapeError("loss_and_backward: one label tuple per canvas required");
    RunCache cache;
    std::array<Tensor, 4> logits = run(canvases, dropout, seed, &cache);

    double loss = 0.0;
    int64_t wrong = 0;
    std::vector<Tensor> grad_thetas(static_cast<size_t>(cfg.steps));
    for (int t = 0; t < cfg.steps; ++t) {
      StepCache& sc = cache.step[static_cast<size_t>(t)];
      std::vector<int> lab(static_cast<size_t>(B));
      for (int64_t b = 0; b < B; ++b)
        lab[static_cast<size_t>(b)] = labels[static_cast<size_t>(b)][static_cast<size_t>(t)];
      sc.xent = softmax_xent_forward(logits[static_cast<size_t>(t)], lab);
      loss += sc.xent.loss / cfg.steps;
      for (int64_t b = 0; b < B; ++b) {
        const Tensor& row = logits[static_cast<size_t>(t)];
        int best = 0;
        for (int k = 1; k < 10; ++k)
          if (row(b, k) > row(b, best)) best = k;
        if (best != lab[static_cast<size_t>(b)]) ++wrong;
      }

      Tensor glog = softmax_xent_backward(sc.xent, lab, 1.0 / cfg.steps);
      DenseGrads g2 = dense_backward(sc.a1, cfc2, glog);
      add_into(g_cfc2.weights, g2.grad_weights);
      add_into(g_cfc2.bias, g2.grad_bias);
      Tensor ga1 = relu_backward(sc.a1, g2.grad_x);
      DenseGrads g1 = dense_backward(sc.flat_dropped, cfc1, ga1);
      add_into(g_cfc1.weights, g1.grad_weights);
      add_into(g_cfc1.bias, g1.grad_bias);
      Tensor grows = dropout_backward(sc.drop, g1.grad_x);
      Tensor grad_ds = trunk_backward(sc.trunk, cconv, grows, g_cconv);

      const int64_t gside = cfg.glimpse / cfg.d;
      Tensor gth({B, 6});
#pragma omp parallel for schedule(static)
      for (int64_t b = 0; b < B; ++b) {
        const size_t sb = static_cast<size_t>(b);
        const double* gsrc = grad_ds.data() + b * gside * gside;
        Tensor gd = Tensor::from({1, gside, gside},
                                 std::vector<double>(gsrc, gsrc + gside * gside));
        Tensor grad_v = avg_downsample_backward(gd, cfg.d);
        SampleGrads sg = bilinear_sample_backward(cache.canvas[sb], sc.grid[sb], grad_v);
        Tensor gt = affine_grid_backward(sg.grad_coords, cfg.glimpse, cfg.glimpse);
        for (int i = 0; i < 6; ++i) gth(b, i) = gt[i];
      }
      grad_thetas[static_cast<size_t>(t)] = std::move(gth);
    }
    localize_sequence_backward_batch(cache.loc, loc, grad_thetas, g_loc);
    if (out_wrong) *out_wrong = wrong;
    return loss;
  }

  std::vector<ParamRef> params() override {
    std::vector<ParamRef> out;
    for (int l = 0; l < 4; ++l) {
      const std::string base = "locnet.conv" + std::to_string(l);
      const size_t sl = static_cast<size_t>(l);
      out.push_back({base + ".w", &loc.conv[sl].weights, &g_loc.conv[sl].weights});
      out.push_back({base + ".b", &loc.conv[sl].bias, &g_loc.conv[sl].bias});
    }
    out.push_back({"locnet.lstm.wi", &loc.lstm.wi, &g_loc.lstm.wi});
    out.push_back({"locnet.lstm.wf", &loc.lstm.wf, &g_loc.lstm.wf});
    out.push_back({"locnet.lstm.wo", &loc.lstm.wo, &g_loc.lstm.wo});
    out.push_back({"locnet.lstm.wg", &loc.lstm.wg, &g_loc.lstm.wg});
    out.push_back({"locnet.lstm.ui", &loc.lstm.ui, &g_loc.lstm.ui});
    out.push_back({"locnet.lstm.uf", &loc.lstm.uf, &g_loc.lstm.uf});
    out.push_back({"locnet.lstm.uo", &loc.lstm.uo, &g_loc.lstm.uo});
    out.push_back({"locnet.lstm.ug", &loc.lstm.ug, &g_loc.lstm.ug});
    out.push_back({"locnet.lstm.bi", &loc.lstm.bi, &g_loc.lstm.bi});
    out.push_back({"locnet.lstm.bf", &loc.lstm.bf, &g_loc.lstm.bf});
    out.push_back({"locnet.lstm.bo", &loc.lstm.bo, &g_loc.lstm.bo});
    out.push_back({"locnet.lstm.bg", &loc.lstm.bg, &g_loc.lstm.bg});
    out.push_back({"locnet.head.w", &loc.head.weights, &g_loc.head.weights});
    out.push_back({"locnet.head.b", &loc.head.bias, &g_loc.head.bias});
    out.push_back({"cls.conv.w", &cconv.weights, &g_cconv.weights});
    out.push_back({"cls.conv.b", &cconv.bias, &g_cconv.bias});
    out.push_back({"cls.fc1.w", &cfc1.weights, &g_cfc1.weights});
    out.push_back({"cls.fc1.b", &cfc1.bias, &g_cfc1.bias});
    out.push_back({"cls.fc2.w", &cfc2.weights, &g_cfc2.weights});
    out.push_back({"cls.fc2.b", &cfc2.bias, &g_cfc2.bias});
    return out;
  }
};

// ---------------------------------------------------------------------------
// Four-head classifier shared by the contrast models: conv -> relu -> pool ->
// dropout -> fc -> relu -> 4 parallel softmax heads.
// ---------------------------------------------------------------------------

struct HeadsCls {
  ConvParams conv;
  DenseParams fc1;
  std::array<DenseParams, 4> heads;

  struct Grads {
    ConvParams conv;
    DenseParams fc1;
    std::array<DenseParams, 4> heads;
  };

  static HeadsCls make(Rng& rng, int64_t filters, int64_t input_side, int64_t fc_width) {
    HeadsCls c;
    c.conv = make_conv_params(rng, filters, 1);
    c.fc1 = make_dense_params(rng, fc_width, trunk_feat_dim(input_side, filters));
    for (auto& h : c.heads) h = make_dense_params(rng, 10, fc_width);
    return c;
  }

  Grads zeros() const {
    Grads g;
    g.conv.weights = Tensor::zeros_like(conv.weights);
    g.conv.bias = Tensor::zeros_like(conv.bias);
    g.fc1 = {Tensor::zeros_like(fc1.weights), Tensor::zeros_like(fc1.bias)};
    for (size_t h = 0; h < 4; ++h)
      g.heads[h] = {Tensor::zeros_like(heads[h].weights), Tensor::zeros_like(heads[h].bias)};
    return g;
  }

  struct Cache {
    TrunkCache trunk;
    DropoutMask drop;
    Tensor flat_dropped;
    Tensor a1;
    std::array<XentResult, 4> xent;
  };

  std::array<Tensor, 4> forward(const Tensor& inputs /*[B x 1 x s x s]*/, bool train_dropout,
                                uint64_t seed, double keep, Cache* cache) {
    Cache local;
    Cache& k = cache ? *cache : local;
    Tensor rows = trunk_forward(inputs, conv, cache ? &k.trunk : nullptr);
    Rng drop_rng(Rng::derive(seed, 0));
    Tensor dropped = dropout_forward(rows, keep, drop_rng, train_dropout, &k.drop);
    Tensor a1 = relu(dense_forward(dropped, fc1));
    std::array<Tensor, 4> logits;
    for (size_t h = 0; h < 4; ++h) logits[h] = dense_forward(a1, heads[h]);
    if (cache) {
      k.flat_dropped = std::move(dropped);
      k.a1 = std::move(a1);
    }
    return logits;
  }

  // Loss over the four heads plus backward to the trunk inputs.
  double loss_and_backward(Cache& k, const std::array<Tensor, 4>& logits,
                           const std::vector<std::array<int, 4>>& labels, Grads& g,
                           Tensor& grad_inputs, int64_t* out_wrong = nullptr) {
    const int64_t B = logits[0].extent(0);
    double loss = 0.0;
    int64_t wrong = 0;
    Tensor ga1_total = Tensor::zeros_like(k.a1);
    for (size_t h = 0; h < 4; ++h) {
      std::vector<int> lab(static_cast<size_t>(B));
      for (int64_t b = 0; b < B; ++b) lab[static_cast<size_t>(b)] = labels[static_cast<size_t>(b)][h];
      k.xent[h] = softmax_xent_forward(logits[h], lab);
      loss += k.xent[h].loss / 4.0;
      for (int64_t b = 0; b < B; ++b) {
        int best = 0;
        for (int k2 = 1; k2 < 10; ++k2)
          if (logits[h](b, k2) > logits[h](b, best)) best = k2;
        if (best != lab[static_cast<size_t>(b)]) ++wrong;
      }
      Tensor glog = softmax_xent_backward(k.xent[h], lab, 0.25);
      DenseGrads hg = dense_backward(k.a1, heads[h], glog);
      add_into(g.heads[h].weights, hg.grad_weights);
      add_into(g.heads[h].bias, hg.grad_bias);
      add_into(ga1_total, hg.grad_x);
    }
    Tensor ga1 = relu_backward(k.a1, ga1_total);
    DenseGrads g1 = dense_backward(k.flat_dropped, fc1, ga1);
    add_into(g.fc1.weights, g1.grad_weights);
    add_into(g.fc1.bias, g1.grad_bias);
    Tensor grows = dropout_backward(k.drop, g1.grad_x);
    grad_inputs = trunk_backward(k.trunk, conv, grows, g.conv);
    if (out_wrong) *out_wrong = wrong;
    return loss;
  }

  void append_params(std::vector<ParamRef>& out, const std::string& prefix, Grads& g) {
    out.push_back({prefix + "conv.w", &conv.weights, &g.conv.weights});
    out.push_back({prefix + "conv.b", &conv.bias, &g.conv.bias});
    out.push_back({prefix + "fc1.w", &fc1.weights, &g.fc1.weights});
    out.push_back({prefix + "fc1.b", &fc1.bias, &g.fc1.bias});
    for (size_t h = 0; h < 4; ++h) {
      const std::string base = prefix + "head" + std::to_string(h);
      out.push_back({base + ".w", &heads[h].weights, &g.heads[h].weights});
      out.push_back({base + ".b", &heads[h].bias, &g.heads[h].bias});
    }
  }
};

// ---------------------------------------------------------------------------
// FFN-STN-CNN: one whole-canvas transform from a feed-forward localization
// network, then the four-head classifier on the (optionally padded and)
// down-sampled result.
// ---------------------------------------------------------------------------

struct FfnStnCnnModel final : Model {
  ModelConfig cfg;
  std::array<ConvParams, 4> conv;
  DenseParams head;
  HeadsCls cls;
  std::array<ConvParams, 4> g_conv;
  DenseParams g_head;
  HeadsCls::Grads g_cls;
  int padded = 0;  // canvas padded up to a multiple of d before down-sampling

  FfnStnCnnModel(const ModelConfig& c, uint64_t seed) : cfg(c) {
    Rng rng(seed);
    const int64_t feat = locnet_feature_dim(cfg.canvas, cfg.canvas, cfg.loc_filters);
    conv[0] = make_conv_params(rng, cfg.loc_filters, 1);
    for (size_t l = 1; l < 4; ++l) conv[l] = make_conv_params(rng, cfg.loc_filters, cfg.loc_filters);
    head.weights = Tensor({6, feat});  // identity transform at init, as in the LSTM head
    head.bias = Tensor::from({6}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
    padded = pad_to_multiple(cfg.canvas, cfg.d);
    cls = HeadsCls::make(rng, cfg.cnn_filters, padded / cfg.d, cfg.fc_width);
    for (size_t l = 0; l < 4; ++l)
      g_conv[l] = {Tensor::zeros_like(conv[l].weights), Tensor::zeros_like(conv[l].bias)};
    g_head = {Tensor::zeros_like(head.weights), Tensor::zeros_like(head.bias)};
    g_cls = cls.zeros();
  }

  ModelKind kind() const override { return ModelKind::FfnStnCnn; }
  const ModelConfig& config() const override { return cfg; }

  struct RunCache {
    FeatCache feat;
    Tensor fmap;
    Tensor theta;                  // [B x 6]
    std::vector<Tensor> canvas;    // [1 x H x W]
    std::vector<SampleGrid> grid;
    Tensor ds;                     // classifier inputs [B x 1 x s x s]
    HeadsCls::Cache cls;
  };

  std::array<Tensor, 4> run(const Tensor& canvases, bool train_dropout, uint64_t seed,
                            RunCache* cache) {
    check_canvases(canvases, cfg.canvas);
    const int64_t B = canvases.extent(0);
    RunCache local;
    RunCache& k = cache ? *cache : local;
    k.fmap = extract_features_batch(canvases, conv, k.feat);
    k.theta = dense_forward(k.fmap, head);
    k.canvas.resize(static_cast<size_t>(B));
    k.grid.assign(static_cast<size_t>(B), SampleGrid{});
    const int64_t side = padded / cfg.d;
    k.ds = Tensor({B, 1, side, side});
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
      const size_t sb = static_cast<size_t>(b);
      k.canvas[sb] = slice_canvas(canvases, b);
      k.grid[sb] = affine_grid(AffineParams::from_row(k.theta, b), cfg.canvas, cfg.canvas);
      Tensor v = bilinear_sample(k.canvas[sb], k.grid[sb]);
      Tensor ds = avg_downsample(pad_image(v, padded), cfg.d);
      std::memcpy(k.ds.data() + b * side * side, ds.data(),
                  static_cast<size_t>(side * side) * sizeof(double));
    }
    return cls.forward(k.ds, train_dropout, seed, cfg.dropout_keep, cache ? &k.cls : nullptr);
  }

  std::array<Tensor, 4> forward(const Tensor& canvases) override {
    return run(canvases, false, 0, nullptr);
  }

  double loss_and_backward(const Tensor& canvases, const std::vector<std::array<int, 4>>& labels,
                           uint64_t seed, bool dropout, int64_t* out_wrong) override {
    const int64_t B = canvases.extent(0);
    if (static_cast<int64_t>(labels.size()) != B)
      throw ShapeError("loss_and_backward: one label tuple per canvas required");
    RunCache k;
    std::array<Tensor, 4> logits = run(canvases, dropout, seed, &k);
    Tensor grad_ds;
    const double loss = cls.loss_and_backward(k.cls, logits, labels, g_cls, grad_ds, out_wrong);

    const int64_t side = padded / cfg.d;
    Tensor gth({B, 6});
#pragma omp parallel for schedule(static)
    for (int64_t b = 0; b < B; ++b) {
      const size_t sb = static_cast<size_t>(b);
      const double* gsrc = grad_ds.data() + b * side * side;
      Tensor gd = Tensor::from({1, side, side}, std::vector<double>(gsrc, gsrc + side * side));
      Tensor grad_pad = avg_downsample_backward(gd, cfg.d);
      Tensor grad_v = unpad_image(grad_pad, cfg.canvas);
      SampleGrads sg = bilinear_sample_backward(k.canvas[sb], k.grid[sb], grad_v);
      Tensor gt = affine_grid_backward(sg.grad_coords, cfg.canvas, cfg.canvas);
      for (int i = 0; i < 6; ++i) gth(b, i) = gt[i];
    }
    DenseGrads hg = dense_backward(k.fmap, head, gth);
    add_into(g_head.weights, hg.grad_weights);
    add_into(g_head.bias, hg.grad_bias);
    extract_features_backward_batch(k.feat, conv, hg.grad_x, g_conv);
    return loss;
  }

  std::vector<ParamRef> params() override {
    std::vector<ParamRef> out;
    for (int l = 0; l < 4; ++l) {
      const std::string base = "locnet.conv" + std::to_string(l);
      const size_t sl = static_cast<size_t>(l);
      out.push_back({base + ".w", &conv[sl].weights, &g_conv[sl].weights});
      out.push_back({base + ".b", &conv[sl].bias, &g_conv[sl].bias});
    }
    out.push_back({"locnet.head.w", &head.weights, &g_head.weights});
    out.push_back({"locnet.head.b", &head.bias, &g_head.bias});
    cls.append_params(out, "cls.", g_cls);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Plain CNN baseline: the four-head classifier straight on the raw canvas.
// ---------------------------------------------------------------------------

struct PlainCnnModel final : Model {
  ModelConfig cfg;
  HeadsCls cls;
  HeadsCls::Grads g_cls;

  PlainCnnModel(const ModelConfig& c, uint64_t seed) : cfg(c) {
    Rng rng(seed);
    cls = HeadsCls::make(rng, cfg.cnn_filters, cfg.canvas, cfg.fc_width);
    g_cls = cls.zeros();
  }

  ModelKind kind() const override { return ModelKind::PlainCnn; }
  const ModelConfig& config() const override { return cfg; }

  Tensor as_planes(const Tensor& canvases) {
    check_canvases(canvases, cfg.canvas);
    return canvases.reshaped({canvases.extent(0), 1, cfg.canvas, cfg.canvas});
  }

  std::array<Tensor, 4> forward(const Tensor& canvases) override {
    return cls.forward(as_planes(canvases), false, 0, cfg.dropout_keep, nullptr);
  }

  double loss_and_backward(const Tensor& canvases, const std::vector<std::array<int, 4>>& labels,
                           uint64_t seed, bool dropout, int64_t* out_wrong) override {
    if (static_cast<int64_t>(labels.size()) != canvases.extent(0))
      throw ShapeError("loss_and_backward: one label tuple per canvas required");
    HeadsCls::Cache k;
    std::array<Tensor, 4> logits =
        cls.forward(as_planes(canvases), dropout, seed, cfg.dropout_keep, &k);
    Tensor grad_inputs;
    return cls.loss_and_backward(k, logits, labels, g_cls, grad_inputs, out_wrong);
  }

  std::vector<ParamRef> params() override {
    std::vector<ParamRef> out;
    cls.append_params(out, "", g_cls);
    return out;
  }
};

}  // namespace

std::unique_ptr<Model> make_model(ModelKind kind, const ModelConfig& cfg, uint64_t init_seed) {
  switch (kind) {
    case ModelKind::LstmStnCnn: return std::make_unique<LstmStnCnnModel>(cfg, init_seed);
    case ModelKind::FfnStnCnn: return std::make_unique<FfnStnCnnModel>(cfg, init_seed);
    case ModelKind::PlainCnn: return std::make_unique<PlainCnnModel>(cfg, init_seed);
  }
  throw ValueError("make_model: bad kind");
}

std::array<int, 4> predict(Model& m, const Tensor& canvas) {
  if (canvas.rank() != 2) throw ShapeError("predict: canvas must be [H x W]");
  std::array<Tensor, 4> logits =
      m.forward(canvas.reshaped({1, canvas.extent(0), canvas.extent(1)}));
  std::array<int, 4> out{};
  for (size_t h = 0; h < 4; ++h) {
    const Tensor& row = logits[h];
    int best = 0;
    for (int k = 1; k < 10; ++k)
      if (row(0, k) > row(0, best)) best = k;
    out[h] = best;
  }
  return out;
}

Tensor canvases_from_compact(const CompactSplit& split, const std::vector<int64_t>& indices) {
  const int64_t plane = static_cast<int64_t>(split.h) * split.w;
  Tensor out({static_cast<int64_t>(indices.size()), split.h, split.w});
  for (size_t i = 0; i < indices.size(); ++i) {
    const uint8_t* src = split.canvases.data() + indices[i] * plane;
    double* dst = out.data() + static_cast<int64_t>(i) * plane;
    for (int64_t j = 0; j < plane; ++j) dst[j] = static_cast<double>(src[j]) / 255.0;
  }
  return out;
}

std::vector<std::array<int, 4>> labels_from_compact(const CompactSplit& split,
                                                    const std::vector<int64_t>& indices) {
  std::vector<std::array<int, 4>> out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i)
    for (size_t t = 0; t < 4; ++t)
      out[i][t] = split.labels[static_cast<size_t>(indices[i])][t];
  return out;
}

EvalResult evaluate(Model& m, const CompactSplit& split, int64_t max_examples, int64_t batch) {
  const int64_t n = max_examples < 0 ? split.count : std::min(split.count, max_examples);
  EvalResult r;
  int64_t wrong = 0;
  double loss_sum = 0.0;
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t stop = std::min(n, start + batch);
    std::vector<int64_t> idx(static_cast<size_t>(stop - start));
    for (int64_t i = start; i < stop; ++i) idx[static_cast<size_t>(i - start)] = i;
    Tensor canvases = canvases_from_compact(split, idx);
    std::vector<std::array<int, 4>> labels = labels_from_compact(split, idx);
    std::array<Tensor, 4> logits = m.forward(canvases);
    for (size_t h = 0; h < 4; ++h) {
      std::vector<int> lab(idx.size());
      for (size_t b = 0; b < idx.size(); ++b) lab[b] = labels[b][h];
      XentResult x = softmax_xent_forward(logits[h], lab);
      loss_sum += x.loss * static_cast<double>(idx.size()) / 4.0;
      for (size_t b = 0; b < idx.size(); ++b) {
        int best = 0;
        for (int k = 1; k < 10; ++k)
          if (logits[h](static_cast<int64_t>(b), k) > logits[h](static_cast<int64_t>(b), best))
            best = k;
        if (best != lab[b]) ++wrong;
      }
    }
  }
  r.loss = loss_sum / static_cast<double>(n);
  r.error = static_cast<double>(wrong) / (4.0 * static_cast<double>(n));
  return r;
}

GlimpseSet lstm_stn_glimpses(Model& m, const Tensor& canvas) {
  auto* model = dynamic_cast<LstmStnCnnModel*>(&m);
  if (!model) throw ValueError("glimpse export needs an lstm-stn-cnn model");
  if (canvas.rank() != 2) throw ShapeError("lstm_stn_glimpses: canvas must be [H x W]");
  const ModelConfig& cfg = model->cfg;
  Tensor batch = canvas.reshaped({1, canvas.extent(0), canvas.extent(1)});
  LocSeqCache lc;
  std::vector<Tensor> thetas = localize_sequence_batch(batch, model->loc, cfg.steps, lc);
  GlimpseSet out;
  out.canvas = canvas;
  Tensor u = canvas.reshaped({1, canvas.extent(0), canvas.extent(1)});
  for (int t = 0; t < cfg.steps && t < 4; ++t) {
    SampleGrid grid = affine_grid(AffineParams::from_row(thetas[static_cast<size_t>(t)], 0),
                                  cfg.glimpse, cfg.glimpse);
    out.glimpses[static_cast<size_t>(t)] =
        bilinear_sample(u, grid).reshaped({cfg.glimpse, cfg.glimpse});
  }
  return out;
}

}  // namespace seqstn
