#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "seqstn/checkpoint.hpp"
#include "seqstn/models.hpp"
#include "seqstn/stn.hpp"
#include "seqstn/trainer.hpp"
#include "support/testutil.hpp"

using namespace seqstn;
using testutil::random_tensor;

namespace {
ModelConfig lstm_toy() {
  ModelConfig c;
  c.canvas = 16;
  c.d = 1;
  c.loc_filters = 2;
  c.lstm_cells = 8;
  c.steps = 2;
  c.glimpse = 8;
  c.cls_filters = 2;
  c.fc_width = 8;
  return c;
}

ModelConfig ffn_toy() {
  ModelConfig c;
  c.canvas = 20;
  c.d = 1;
  c.loc_filters = 2;
  c.cnn_filters = 2;
  c.fc_width = 8;
  return c;
}

ModelConfig cnn_toy(int canvas = 20) {
  ModelConfig c;
  c.canvas = canvas;
  c.cnn_filters = 2;
  c.fc_width = 8;
  return c;
}

Tensor* find_param(Model& m, const std::string& name) {
  for (ParamRef& r : m.params())
    if (r.name == name) return r.value;
  return nullptr;
}

// Nudge the localization head off the exact identity so sampling grids leave
// the tent-kernel kinks; finite differences need smooth surroundings.
void perturb_head(Model& m, uint64_t seed) {
  Rng rng(seed);
  Tensor* w = find_param(m, "locnet.head.w");
  Tensor* b = find_param(m, "locnet.head.b");
  REQUIRE(w != nullptr);
  for (int64_t i = 0; i < w->size(); ++i) (*w)[i] = rng.uniform(-0.25, 0.25);
  for (int64_t i = 0; i < b->size(); ++i) (*b)[i] += rng.uniform(-0.1, 0.1);
}

// conv biases off the relu kink for finite-difference checks
void nudge_conv_biases(Model& m, uint64_t seed) {
  Rng rng(seed);
  for (ParamRef& r : m.params())
    if (r.name.find("conv") != std::string::npos && r.name.ends_with(".b"))
      testutil::randomize_bias(*r.value, rng);
}

std::vector<std::array<int, 4>> random_labels(Rng& rng, int64_t n) {
  std::vector<std::array<int, 4>> out(static_cast<size_t>(n));
  for (auto& l : out)
    for (int& v : l) v = static_cast<int>(rng.next_below(10));
  return out;
}

void model_fd_check(Model& m, const Tensor& canvases,
                    const std::vector<std::array<int, 4>>& labels, testutil::GradCheck& gc) {
  m.zero_grads();
  m.loss_and_backward(canvases, labels, 0, /*dropout=*/false);
  std::vector<ParamRef> refs = m.params();
  std::vector<Tensor> analytic;
  analytic.reserve(refs.size());
  for (ParamRef& r : refs) analytic.push_back(*r.grad);
  auto loss = [&] {
    m.zero_grads();
    return m.loss_and_backward(canvases, labels, 0, /*dropout=*/false);
  };
  for (size_t i = 0; i < refs.size(); ++i) check_grad(*refs[i].value, analytic[i], loss, gc);
}

// A random instance can park a sampling coordinate or a relu pre-activation
// on a kink, where finite differences are one-sided by construction. Such an
// instance is outside the oracle's domain, so it is redrawn; a genuine
// gradient bug fails every draw.
bool model_fd_kink_free(ModelKind kind, const ModelConfig& cfg, uint64_t seed,
                        testutil::GradCheck& total, std::string* worst) {
  for (uint64_t attempt = 0; attempt < 5; ++attempt) {
    const uint64_t s = seed + attempt * 1000;
    std::unique_ptr<Model> m = make_model(kind, cfg, s);
    if (kind != ModelKind::PlainCnn) perturb_head(*m, s * 3 + 1);
    nudge_conv_biases(*m, s * 3 + 11);
    Rng rng(s * 17 + 5);
    Tensor canvases = random_tensor(rng, {2, cfg.canvas, cfg.canvas}, 0.05, 0.95);
    testutil::GradCheck gc;
    model_fd_check(*m, canvases, random_labels(rng, 2), gc);
    total.checked += gc.checked;
    if (gc.ok()) return true;
    if (worst) *worst = gc.worst;
  }
  return false;
}
}  // namespace

TEST_CASE("identity-initialized LSTM-STN: identical glimpses and identical heads") {
  ModelConfig cfg;
  cfg.canvas = 48;  // full-size structure would also work; this keeps it quick
  cfg.d = 1;
  cfg.loc_filters = 2;
  cfg.lstm_cells = 8;
  cfg.steps = 4;
  cfg.glimpse = 24;
  cfg.cls_filters = 2;
  cfg.fc_width = 8;
  std::unique_ptr<Model> m = make_model(ModelKind::LstmStnCnn, cfg, 5);
  Rng rng(6);
  Tensor canvas = random_tensor(rng, {48, 48}, 0.0, 1.0);

  GlimpseSet set = lstm_stn_glimpses(*m, canvas);
  Tensor expected = bilinear_sample(canvas.reshaped({1, 48, 48}),
                                    affine_grid(AffineParams::identity(), 24, 24))
                        .reshaped({24, 24});
  for (size_t t = 0; t < 4; ++t) {
    CHECK(testutil::max_abs_diff(set.glimpses[t], expected) == 0.0);
    CHECK(testutil::max_abs_diff(set.glimpses[t], set.glimpses[0]) == 0.0);
  }

  Tensor batch = canvas.reshaped({1, 48, 48});
  std::array<Tensor, 4> logits = m->forward(batch);
  CHECK(logits[0].extent(0) == 1);
  CHECK(logits[0].extent(1) == 10);
  for (size_t t = 1; t < 4; ++t)
    CHECK(testutil::max_abs_diff(logits[t], logits[0]) == 0.0);  // shared classifier, same input

  // exactly one classifier parameter set exists (shared across time steps)
  int cls_count = 0;
  for (ParamRef& r : m->params()) cls_count += r.name == "cls.fc1.w";
  CHECK(cls_count == 1);
}

TEST_CASE("untrained model loss is ln 10 within 5% on random data") {
  ModelConfig cfg = lstm_toy();
  std::unique_ptr<Model> m = make_model(ModelKind::LstmStnCnn, cfg, 7);
  Rng rng(8);
  Tensor canvases = random_tensor(rng, {100, 16, 16}, 0.0, 1.0);
  std::vector<std::array<int, 4>> labels = random_labels(rng, 100);
  m->zero_grads();
  const double loss = m->loss_and_backward(canvases, labels, 1, /*dropout=*/false);
  CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(0.05));
}

TEST_CASE("FFN-STN with the identity transform equals the plain CNN on the same weights") {
  std::unique_ptr<Model> ffn = make_model(ModelKind::FfnStnCnn, ffn_toy(), 11);
  std::unique_ptr<Model> cnn = make_model(ModelKind::PlainCnn, cnn_toy(), 12);
  // copy the FFN's classifier into the plain model
  for (ParamRef& r : cnn->params()) {
    Tensor* src = find_param(*ffn, "cls." + r.name);
    REQUIRE(src != nullptr);
    *r.value = *src;
  }
  Rng rng(13);
  Tensor canvases = random_tensor(rng, {3, 20, 20}, 0.0, 1.0);
  std::array<Tensor, 4> a = ffn->forward(canvases);  // identity-initialized localization head
  std::array<Tensor, 4> b = cnn->forward(canvases);
  for (size_t h = 0; h < 4; ++h) CHECK(testutil::max_abs_diff(a[h], b[h]) < 1e-9);
}

TEST_CASE("full-model gradients match finite differences (shrunken configs)") {
  testutil::GradCheck total;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    std::string worst;
    {
      INFO("lstm-stn seed ", seed, ": ", worst);
      CHECK(model_fd_kink_free(ModelKind::LstmStnCnn, lstm_toy(), seed, total, &worst));
    }
    {
      INFO("ffn-stn seed ", seed, ": ", worst);
      CHECK(model_fd_kink_free(ModelKind::FfnStnCnn, ffn_toy(), seed + 50, total, &worst));
    }
    {
      INFO("cnn seed ", seed, ": ", worst);
      CHECK(model_fd_kink_free(ModelKind::PlainCnn, cnn_toy(), seed + 90, total, &worst));
    }
  }
  CHECK(total.checked > 10000);
}

TEST_CASE("untrained per-digit error sits at chance level") {
  Rng rng(21);
  std::vector<MnistDigit> pool = testutil::fake_pool(rng, 60);
  DatasetSplit split = generate_split(31337, 600, pool, SplitRole::test);
  auto dir = std::filesystem::temp_directory_path() / "seqstn-models-test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "chance.sqmn").string();
  write_split(path, split);
  CompactSplit compact = read_split_compact(path);

  std::unique_ptr<Model> m = make_model(ModelKind::PlainCnn, cnn_toy(100), 22);
  EvalResult r = evaluate(*m, compact);
  CHECK(r.error > 0.87);
  CHECK(r.error < 0.93);
}

TEST_CASE("a model can memorize one example") {
  Rng rng(31);
  std::vector<MnistDigit> pool = testutil::fake_pool(rng, 40);
  CanvasExample ex = generate_canvas(555, pool);
  Tensor canvases = ex.canvas.reshaped({1, 100, 100});
  std::vector<std::array<int, 4>> labels{ex.labels};

  std::unique_ptr<Model> m = make_model(ModelKind::PlainCnn, cnn_toy(100), 32);
  MomentumSgd sgd(0.9);
  double loss = 0.0;
  for (int step = 0; step < 150; ++step) {
    m->zero_grads();
    loss = m->loss_and_backward(canvases, labels, 0, /*dropout=*/false);
    std::vector<ParamRef> params = m->params();
    sgd.step(params, 0.05);
  }
  CHECK(loss < 0.05);
  CHECK(predict(*m, ex.canvas) == ex.labels);
}

TEST_CASE("checkpoint: bitwise round trip and model mismatch detection") {
  std::unique_ptr<Model> m = make_model(ModelKind::LstmStnCnn, lstm_toy(), 41);
  auto dir = std::filesystem::temp_directory_path() / "seqstn-models-test";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "a.ckpt").string(), p2 = (dir / "b.ckpt").string();

  Checkpoint ckpt = snapshot_model(*m, 123);
  write_checkpoint(p1, ckpt);
  Checkpoint back = read_checkpoint(p1);
  CHECK(back.step == 123);
  CHECK(back.kind == ModelKind::LstmStnCnn);
  write_checkpoint(p2, back);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream b1, b2;
  b1 << f1.rdbuf();
  b2 << f2.rdbuf();
  CHECK(b1.str().size() > 0);
  CHECK(b1.str() == b2.str());

  // loading restores forward behaviour exactly
  std::unique_ptr<Model> fresh = make_model(ModelKind::LstmStnCnn, lstm_toy(), 999);
  load_model_params(*fresh, back);
  Rng rng(42);
  Tensor canvases = random_tensor(rng, {2, 16, 16}, 0.0, 1.0);
  std::array<Tensor, 4> la = m->forward(canvases);
  std::array<Tensor, 4> lb = fresh->forward(canvases);
  for (int t = 0; t < 2; ++t)
    CHECK(testutil::max_abs_diff(la[static_cast<size_t>(t)], lb[static_cast<size_t>(t)]) == 0.0);

  // kind mismatch
  std::unique_ptr<Model> cnn = make_model(ModelKind::PlainCnn, cnn_toy(), 43);
  CHECK_THROWS_AS(load_model_params(*cnn, back), FormatError);

  // same kind, incompatible architecture (different d -> different fc shape)
  ModelConfig other = lstm_toy();
  other.d = 2;
  std::unique_ptr<Model> mismatched = make_model(ModelKind::LstmStnCnn, other, 44);
  CHECK_THROWS_AS(load_model_params(*mismatched, back), FormatError);
}

TEST_CASE("glimpse export rejects non-recurrent models; bad d rejected") {
  std::unique_ptr<Model> cnn = make_model(ModelKind::PlainCnn, cnn_toy(), 51);
  Tensor canvas({20, 20});
  CHECK_THROWS_AS(lstm_stn_glimpses(*cnn, canvas), ValueError);

  ModelConfig bad = lstm_toy();
  bad.d = 3;  // does not divide glimpse 8
  CHECK_THROWS_AS(make_model(ModelKind::LstmStnCnn, bad, 52), ValueError);
}

TEST_CASE("model names parse both ways") {
  CHECK(model_kind_from_name("lstm-stn-cnn") == ModelKind::LstmStnCnn);
  CHECK(model_kind_from_name("ffn-stn-cnn") == ModelKind::FfnStnCnn);
  CHECK(model_kind_from_name("cnn") == ModelKind::PlainCnn);
  CHECK_THROWS_AS(model_kind_from_name("mlp"), ValueError);
  CHECK(model_kind_name(ModelKind::FfnStnCnn) == "ffn-stn-cnn");
}
