#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "../src/ref/reference.hpp"
#include "seqstn/tensor.hpp"
#include "support/testutil.hpp"

using namespace seqstn;

TEST_CASE("matmul identity and projection cases") {
  Tensor i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(i2, a);
  for (int64_t k = 0; k < 4; ++k) CHECK(r[k] == a[k]);

  Tensor proj = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from({2, 1}, {5, 7});
  Tensor pv = matmul(proj, v);
  CHECK(pv(0, 0) == 5.0);
  CHECK(pv(1, 0) == 0.0);
}

TEST_CASE("matmul equals triple-loop reference") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor a = testutil::random_tensor(rng, {3, 4});
    Tensor b = testutil::random_tensor(rng, {4, 2});
    CHECK(testutil::max_abs_diff(matmul(a, b), ref::matmul(a, b)) < 1e-12);
  }
  // larger shapes, still against the oracle
  Tensor a = testutil::random_tensor(rng, {17, 33});
  Tensor b = testutil::random_tensor(rng, {33, 9});
  CHECK(testutil::max_abs_diff(matmul(a, b), ref::matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul with identity is exact for random A") {
  Rng rng(12);
  for (int64_t n : {1, 3, 7}) {
    Tensor a = testutil::random_tensor(rng, {5, n});
    Tensor id({n, n});
    for (int64_t i = 0; i < n; ++i) id(i, i) = 1.0;
    Tensor r = matmul(a, id);
    CHECK(std::memcmp(r.data(), a.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0);
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  Tensor a({2, 3}), b({4, 2});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, Tensor({3})), ShapeError);
}

TEST_CASE("elementwise ops") {
  Tensor a = Tensor::from({2}, {1, 2});
  Tensor z = Tensor::from({2}, {0, 0});
  Tensor s = ew_add(a, z);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == 2.0);

  Tensor m = ew_mul(Tensor::from({2}, {2, 3}), Tensor::from({2}, {4, 5}));
  CHECK(m[0] == 8.0);
  CHECK(m[1] == 15.0);

  Tensor sig = ew_map(Tensor({3, 3}), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  for (int64_t i = 0; i < sig.size(); ++i) CHECK(sig[i] == 0.5);

  CHECK(ew_add(a, 1.5)[1] == 3.5);
  CHECK(ew_mul(a, 2.0)[1] == 4.0);
  CHECK_THROWS_AS(ew_add(a, Tensor({3})), ShapeError);
  CHECK_THROWS_AS(ew_mul(a, Tensor({3})), ShapeError);
}

TEST_CASE("ew_add commutative and associative within 1e-15") {
  Rng rng(13);
  Tensor a = testutil::random_tensor(rng, {64});
  Tensor b = testutil::random_tensor(rng, {64});
  Tensor c = testutil::random_tensor(rng, {64});
  Tensor ab = ew_add(a, b), ba = ew_add(b, a);
  CHECK(testutil::max_abs_diff(ab, ba) == 0.0);  // FP addition commutes exactly
  Tensor l = ew_add(ew_add(a, b), c), r = ew_add(a, ew_add(b, c));
  for (int64_t i = 0; i < l.size(); ++i) {
    const double scale = std::max({std::abs(l[i]), std::abs(r[i]), 1e-30});
    CHECK(std::abs(l[i] - r[i]) / scale <= 1e-15);
  }
}

TEST_CASE("init_fan_scaled bound, mean, determinism, shape") {
  Rng rng(42);
  Tensor t = init_fan_scaled(rng, {1000}, 3, 3);  // bound = sqrt(6/6) = 1
  double mean = 0.0;
  for (int64_t i = 0; i < t.size(); ++i) {
    CHECK(std::abs(t[i]) <= 1.0);
    mean += t[i];
  }
  mean /= static_cast<double>(t.size());
  CHECK(std::abs(mean) < 0.05);

  Rng r1(7), r2(7);
  Tensor a = init_fan_scaled(r1, {2, 3}, 5, 9);
  Tensor b = init_fan_scaled(r2, {2, 3}, 5, 9);
  CHECK(a.size() == 6);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 6) == 0);

  CHECK_THROWS_AS(init_fan_scaled(rng, {2}, 0, 3), ValueError);
}

TEST_CASE("rng child streams are stable and distinct") {
  CHECK(Rng::derive(1, 0) != Rng::derive(1, 1));
  CHECK(Rng::derive(1, 5) == Rng::derive(1, 5));
  CHECK(Rng::derive(2, 5) != Rng::derive(1, 5));
  Rng r(Rng::derive(99, 3));
  const double first = r.next_unit();
  CHECK(first >= 0.0);
  CHECK(first < 1.0);
}

TEST_CASE("tensor serialization round-trips bitwise") {
  Rng rng(21);
  Tensor t = testutil::random_tensor(rng, {3, 4, 2});
  std::stringstream ss;
  write_tensor(ss, t);
  Tensor back = read_tensor(ss);
  REQUIRE(back.same_shape(t));
  CHECK(std::memcmp(back.data(), t.data(), sizeof(double) * static_cast<size_t>(t.size())) == 0);

  std::stringstream bad("XXXXrest");
  CHECK_THROWS_AS(read_tensor(bad), FormatError);
  std::stringstream trunc;
  write_tensor(trunc, t);
  std::string payload = trunc.str();
  payload.resize(payload.size() - 5);
  std::stringstream cut(payload);
  CHECK_THROWS_AS(read_tensor(cut), FormatError);
}

TEST_CASE("seeded pipelines are bit-reproducible") {
  auto pipeline = [] {
    Rng rng(1234);
    Tensor w = init_fan_scaled(rng, {8, 8}, 8, 8);
    Tensor x = testutil::random_tensor(rng, {8, 8});
    return ew_mul(ew_add(matmul(w, x), 0.25), matmul(x, w));
  };
  Tensor a = pipeline();
  Tensor b = pipeline();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0);
}

TEST_CASE("tensor construction and finiteness checks") {
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0}), ShapeError);
  Tensor t = Tensor::from({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK_FALSE(t.all_finite());
  t[1] = 2.0;
  CHECK(t.all_finite());
}
