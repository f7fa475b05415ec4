#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../src/ref/reference.hpp"
#include "seqstn/layers.hpp"
#include "support/testutil.hpp"

using namespace seqstn;
using testutil::random_tensor;

namespace {
ConvParams random_conv(Rng& rng, int64_t oc, int64_t ic) {
  ConvParams p;
  p.weights = random_tensor(rng, {oc, ic, 3, 3});
  p.bias = random_tensor(rng, {oc});
  return p;
}
}  // namespace

TEST_CASE("conv2d: zero input yields constant bias planes") {
  Rng rng(1);
  ConvParams p = random_conv(rng, 3, 2);
  Tensor out = conv2d_forward(Tensor({2, 5, 5}), p, 1);
  for (int64_t oc = 0; oc < 3; ++oc)
    for (int64_t y = 0; y < 5; ++y)
      for (int64_t x = 0; x < 5; ++x) CHECK(out(oc, y, x) == doctest::Approx(p.bias[oc]).epsilon(1e-15));
}

TEST_CASE("conv2d: centered delta kernel is the identity") {
  Rng rng(2);
  Tensor x = random_tensor(rng, {1, 3, 3});
  ConvParams p;
  p.weights = Tensor({1, 1, 3, 3});
  p.weights(0, 0, 1, 1) = 1.0;
  p.bias = Tensor({1});
  Tensor out = conv2d_forward(x, p, 1);
  CHECK(testutil::max_abs_diff(out, x) == 0.0);
}

TEST_CASE("conv2d matches the direct six-loop reference") {
  Rng rng(3);
  for (int pad : {0, 1}) {
    Tensor x = random_tensor(rng, {2, 5, 5});
    ConvParams p = random_conv(rng, 3, 2);
    Tensor fast = conv2d_forward(x, p, pad);
    Tensor slow = ref::conv2d_forward(x, p, pad);
    CHECK(testutil::max_abs_diff(fast, slow) < 1e-12);
  }
}

TEST_CASE("conv2d rejects channel mismatch") {
  Rng rng(4);
  ConvParams p = random_conv(rng, 2, 3);
  CHECK_THROWS_AS(conv2d_forward(Tensor({2, 5, 5}), p, 1), ShapeError);
}

TEST_CASE("conv2d backward: zero grad and bias under sum-loss") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {2, 4, 4});
  ConvParams p = random_conv(rng, 3, 2);
  ConvGrads g0 = conv2d_backward(x, p, Tensor({3, 4, 4}), 1);
  CHECK(testutil::max_abs_diff(g0.grad_x, Tensor({2, 4, 4})) == 0.0);
  CHECK(testutil::max_abs_diff(g0.grad_weights, Tensor({3, 2, 3, 3})) == 0.0);

  // loss = sum(out): grad_bias[k] = H*W
  ConvGrads g1 = conv2d_backward(x, p, Tensor::full({3, 4, 4}, 1.0), 1);
  for (int64_t k = 0; k < 3; ++k) CHECK(g1.grad_bias[k] == doctest::Approx(16.0));
}

TEST_CASE("conv2d gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 100);
    Tensor x = random_tensor(rng, {2, 6, 6});
    ConvParams p = random_conv(rng, 3, 2);
    Tensor proj = random_tensor(rng, {3, 6, 6});
    auto loss = [&] { return testutil::dot_with(conv2d_forward(x, p, 1), proj); };
    ConvGrads g = conv2d_backward(x, p, proj, 1);
    testutil::GradCheck gc;
    testutil::check_grad(x, g.grad_x, loss, gc);
    testutil::check_grad(p.weights, g.grad_weights, loss, gc);
    testutil::check_grad(p.bias, g.grad_bias, loss, gc);
    INFO(gc.worst);
    CHECK(gc.ok());
    CHECK(gc.checked == x.size() + p.weights.size() + p.bias.size());
  }
}

TEST_CASE("maxpool2 basic cases") {
  Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  PoolResult r = maxpool2_forward(x);
  CHECK(r.values.size() == 1);
  CHECK(r.values[0] == 4.0);

  Tensor c = Tensor::full({2, 4, 6}, 3.25);
  PoolResult rc = maxpool2_forward(c);
  for (int64_t i = 0; i < rc.values.size(); ++i) CHECK(rc.values[i] == 3.25);
  // ties resolve to the first row-major element of each window
  CHECK(rc.argmax[0] == 0);

  // odd trailing row/column dropped
  PoolResult ro = maxpool2_forward(Tensor({1, 5, 7}));
  CHECK(ro.values.extent(1) == 2);
  CHECK(ro.values.extent(2) == 3);
}

TEST_CASE("maxpool2 backward routes gradient to the argmax only") {
  Rng rng(6);
  Tensor x = random_tensor(rng, {2, 6, 6});
  PoolResult r = maxpool2_forward(x);
  Tensor proj = random_tensor(rng, {2, 3, 3});
  Tensor gx = maxpool2_backward(r, x.shape(), proj);
  auto loss = [&] { return testutil::dot_with(maxpool2_forward(x).values, proj); };
  testutil::GradCheck gc;
  testutil::check_grad(x, gx, loss, gc);  // random doubles: ties have measure zero
  INFO(gc.worst);
  CHECK(gc.ok());
}

TEST_CASE("dense forward/backward vs finite differences") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 300 + 7);
    Tensor x = random_tensor(rng, {4, 6});
    DenseParams p{random_tensor(rng, {3, 6}), random_tensor(rng, {3})};
    Tensor proj = random_tensor(rng, {4, 3});
    auto loss = [&] { return testutil::dot_with(dense_forward(x, p), proj); };
    DenseGrads g = dense_backward(x, p, proj);
    testutil::GradCheck gc;
    testutil::check_grad(x, g.grad_x, loss, gc);
    testutil::check_grad(p.weights, g.grad_weights, loss, gc);
    testutil::check_grad(p.bias, g.grad_bias, loss, gc);
    INFO(gc.worst);
    CHECK(gc.ok());
  }
  // rank-1 input behaves as a batch of one
  Rng rng(8);
  DenseParams p{random_tensor(rng, {2, 3}), random_tensor(rng, {2})};
  Tensor v = random_tensor(rng, {3});
  Tensor y = dense_forward(v, p);
  CHECK(y.rank() == 1);
  CHECK(y[0] == doctest::Approx(p.weights(0, 0) * v[0] + p.weights(0, 1) * v[1] +
                                p.weights(0, 2) * v[2] + p.bias[0]));
}

TEST_CASE("dropout: keep=1 identity, eval passthrough, train-mode mean") {
  Rng rng(9);
  Tensor x = random_tensor(rng, {50});
  DropoutMask m;
  Tensor y = dropout_forward(x, 1.0, rng, true, &m);
  CHECK(testutil::max_abs_diff(x, y) == 0.0);

  Tensor ye = dropout_forward(x, 0.5, rng, false, &m);
  CHECK(testutil::max_abs_diff(x, ye) == 0.0);
  CHECK(m.mask.size() == 0);

  // inverted scaling: mean over many masked passes of a constant input stays
  // within 2% of the input
  const double keep = 0.5;
  double sum = 0.0;
  const int passes = 10000;
  Tensor ones = Tensor::full({16}, 1.0);
  for (int i = 0; i < passes; ++i) {
    Tensor out = dropout_forward(ones, keep, rng, true, nullptr);
    for (int64_t j = 0; j < out.size(); ++j) sum += out[j];
  }
  const double mean = sum / (passes * 16.0);
  CHECK(std::abs(mean - 1.0) < 0.02);

  CHECK_THROWS_AS(dropout_forward(x, 0.0, rng, true, nullptr), ValueError);
  CHECK_THROWS_AS(dropout_forward(x, 1.5, rng, true, nullptr), ValueError);
}

TEST_CASE("dropout backward applies the same mask") {
  Rng rng(10);
  Tensor x = random_tensor(rng, {32});
  DropoutMask m;
  Tensor y = dropout_forward(x, 0.5, rng, true, &m);
  Tensor g = dropout_backward(m, Tensor::full({32}, 1.0));
  for (int64_t i = 0; i < 32; ++i) {
    CHECK(g[i] == m.mask[i]);
    CHECK(y[i] == x[i] * m.mask[i]);
  }
}

TEST_CASE("softmax cross-entropy: uniform logits give ln 10") {
  Tensor logits({3, 10});
  std::vector<int> labels{0, 5, 9};
  XentResult r = softmax_xent_forward(logits, labels);
  CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  for (int64_t b = 0; b < 3; ++b) {
    double rowsum = 0.0;
    for (int64_t k = 0; k < 10; ++k) rowsum += r.probs(b, k);
    CHECK(std::abs(rowsum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax cross-entropy: saturated correct logits give tiny loss") {
  Tensor logits({2, 10});
  logits(0, 3) = 100.0;
  logits(1, 7) = 100.0;
  std::vector<int> labels{3, 7};
  CHECK(softmax_xent_forward(logits, labels).loss < 1e-3);
}

TEST_CASE("softmax backward is (prob - onehot)/batch and matches FD") {
  Rng rng(11);
  Tensor logits = random_tensor(rng, {4, 10});
  std::vector<int> labels{1, 0, 9, 4};
  XentResult r = softmax_xent_forward(logits, labels);
  Tensor g = softmax_xent_backward(r, labels);
  for (int64_t b = 0; b < 4; ++b)
    for (int64_t k = 0; k < 10; ++k) {
      const double expect = (r.probs(b, k) - (labels[static_cast<size_t>(b)] == k ? 1 : 0)) / 4.0;
      CHECK(g(b, k) == doctest::Approx(expect).epsilon(1e-12));
    }
  auto loss = [&] { return softmax_xent_forward(logits, labels).loss; };
  testutil::GradCheck gc;
  testutil::check_grad(logits, g, loss, gc);
  INFO(gc.worst);
  CHECK(gc.ok());
}

TEST_CASE("softmax rejects out-of-range labels") {
  Tensor logits({1, 10});
  std::vector<int> bad{10};
  CHECK_THROWS_AS(softmax_xent_forward(logits, bad), ValueError);
  std::vector<int> neg{-1};
  CHECK_THROWS_AS(softmax_xent_forward(logits, neg), ValueError);
}

TEST_CASE("relu and its backward") {
  Tensor x = Tensor::from({4}, {-1.0, 0.0, 0.5, 2.0});
  Tensor y = relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 0.5);
  Tensor g = relu_backward(y, Tensor::full({4}, 3.0));
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 3.0);
  CHECK(g[3] == 3.0);
}
