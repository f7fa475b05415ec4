#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../src/ref/reference.hpp"
#include "seqstn/downsample.hpp"
#include "support/testutil.hpp"

using namespace seqstn;
using testutil::random_tensor;

TEST_CASE("avg_downsample basic cases") {
  Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor y = avg_downsample(x, 2);
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(2.5).epsilon(1e-15));

  Rng rng(1);
  Tensor u = random_tensor(rng, {3, 6, 6});
  Tensor same = avg_downsample(u, 1);
  CHECK(testutil::max_abs_diff(u, same) == 0.0);
}

TEST_CASE("sampled point count follows (H/d)(W/d)") {
  Rng rng(2);
  Tensor u100 = random_tensor(rng, {1, 100, 100});
  for (int d : {1, 2, 4}) {
    Tensor y = avg_downsample(u100, d);
    CHECK(y.extent(1) * y.extent(2) == (100 / d) * (100 / d));
  }
  Tensor y4 = avg_downsample(u100, 4);
  CHECK(y4.extent(1) == 25);
  CHECK(y4.extent(2) == 25);
  CHECK(y4.extent(1) * y4.extent(2) == 625);

  Tensor u48 = random_tensor(rng, {1, 48, 48});
  for (int d : {1, 2, 3, 4}) {
    Tensor y = avg_downsample(u48, d);
    CHECK(y.extent(1) * y.extent(2) == (48 / d) * (48 / d));
  }
}

TEST_CASE("non-divisor factor is a hard error, not truncation") {
  Rng rng(3);
  Tensor u = random_tensor(rng, {1, 100, 100});
  CHECK_THROWS_AS(avg_downsample(u, 3), ValueError);
  CHECK_THROWS_AS(avg_downsample(u, 7), ValueError);
  CHECK_THROWS_AS(avg_downsample(u, 0), ValueError);
}

TEST_CASE("matches the direct reference") {
  Rng rng(4);
  Tensor u = random_tensor(rng, {2, 12, 12});
  for (int d : {2, 3, 4, 6}) {
    CHECK(testutil::max_abs_diff(avg_downsample(u, d), ref::avg_downsample(u, d)) < 1e-12);
  }
}

TEST_CASE("backward spreads grad/d^2 uniformly and matches finite differences") {
  Tensor g1 = Tensor::from({1, 1, 1}, {1.0});
  Tensor gu = avg_downsample_backward(g1, 2);
  REQUIRE(gu.size() == 4);
  for (int64_t i = 0; i < 4; ++i) CHECK(gu[i] == 0.25);

  Rng rng(5);
  Tensor pass = random_tensor(rng, {2, 5, 5});
  CHECK(testutil::max_abs_diff(avg_downsample_backward(pass, 1), pass) == 0.0);

  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng r(seed * 31);
    Tensor u = random_tensor(r, {2, 6, 6});
    Tensor proj = random_tensor(r, {2, 3, 3});
    auto loss = [&] { return testutil::dot_with(avg_downsample(u, 2), proj); };
    Tensor grad = avg_downsample_backward(proj, 2);
    testutil::GradCheck gc;
    testutil::check_grad(u, grad, loss, gc);
    INFO(gc.worst);
    CHECK(gc.ok());
  }
}

TEST_CASE("mean preservation and factor composition") {
  Rng rng(6);
  Tensor u = random_tensor(rng, {1, 24, 24});
  auto mean = [](const Tensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) s += t[i];
    return s / static_cast<double>(t.size());
  };
  for (int d : {2, 3, 4}) CHECK(std::abs(mean(avg_downsample(u, d)) - mean(u)) < 1e-12);

  Tensor ab = avg_downsample(avg_downsample(u, 2), 3);
  Tensor once = avg_downsample(u, 6);
  CHECK(testutil::max_abs_diff(ab, once) < 1e-12);
}
