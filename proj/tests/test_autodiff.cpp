#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "timr/autodiff.hpp"
#include "timr/gradcheck.hpp"
#include "timr/rng.hpp"

using namespace timr;
using namespace timr::ops;

namespace {

DenseTensor rand_t(std::vector<int> shape, uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  DenseTensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("conv2d trivial values") {
  auto x = make_leaf(DenseTensor::full({1, 1, 3, 3}, 1.0f), false);
  auto k = make_leaf(DenseTensor::full({1, 1, 3, 3}, 1.0f), false);
  auto y = conv2d(x, k, 1, 0);
  CHECK(y->value.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y->value[0] == doctest::Approx(9.0f));

  auto xi = make_leaf(rand_t({2, 1, 5, 6}, 3), false);
  auto ki = make_leaf(DenseTensor({1, 1, 1, 1}, {1.0f}), false);
  auto yi = conv2d(xi, ki, 1, 0);
  for (int64_t i = 0; i < yi->value.numel(); ++i)
    CHECK(yi->value[i] == xi->value[i]);
}

TEST_CASE("conv2d output geometry and rejection") {
  auto x = make_leaf(rand_t({1, 2, 8, 8}, 5), false);
  auto k = make_leaf(rand_t({4, 2, 3, 3}, 6), false);
  auto y = conv2d(x, k, 2, 1);
  CHECK(y->value.shape() == std::vector<int>{1, 4, 4, 4});

  auto bad_k = make_leaf(rand_t({4, 3, 3, 3}, 7), false);
  CHECK_THROWS_WITH_AS(conv2d(x, bad_k, 1, 0),
                       doctest::Contains("channels"), std::invalid_argument);
  auto big_k = make_leaf(rand_t({1, 2, 9, 9}, 8), false);
  CHECK_THROWS_AS(conv2d(x, big_k, 1, 0), std::invalid_argument);
}

TEST_CASE("elementwise trivial values") {
  auto z = make_leaf(DenseTensor({1, 1, 1, 1}, {0.0f}), false);
  CHECK(sigmoid(z)->value[0] == doctest::Approx(0.5f));

  auto m = make_leaf(DenseTensor({1, 1, 1, 1}, {-1.0f}), false);
  CHECK(leaky_relu(m, 0.2f)->value[0] == doctest::Approx(-0.2f));

  auto a = make_leaf(DenseTensor({1, 1, 1, 2}, {3.0f, -2.0f}), false);
  auto b = make_leaf(DenseTensor({1, 1, 1, 2}, {1.0f, 5.0f}), false);
  auto d = abs_val(sub(a, b));
  CHECK(d->value[0] == doctest::Approx(2.0f));
  CHECK(d->value[1] == doctest::Approx(7.0f));

  CHECK_THROWS_AS(add(a, make_leaf(DenseTensor({1, 1, 2, 2}), false)),
                  std::invalid_argument);
}

TEST_CASE("instance_norm output statistics") {
  auto x = make_leaf(rand_t({2, 3, 8, 8}, 11, 0.5, 4.0), false);
  auto y = instance_norm(x);
  const int64_t plane = 64;
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0, var = 0.0;
      for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w) mean += y->value.at(b, c, h, w);
      mean /= double(plane);
      for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w) {
          const double dv = y->value.at(b, c, h, w) - mean;
          var += dv * dv;
        }
      var /= double(plane);
      CHECK(std::fabs(mean) < 1e-5);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("bilinear resize is exact identity at the same size") {
  auto x = make_leaf(rand_t({1, 2, 7, 9}, 13), false);
  auto y = bilinear_resize(x, 7, 9);
  for (int64_t i = 0; i < x->value.numel(); ++i) CHECK(y->value[i] == x->value[i]);
}

TEST_CASE("upsample_nearest2 copies blocks") {
  auto x = make_leaf(DenseTensor({1, 1, 2, 2}, {1, 2, 3, 4}), false);
  auto y = upsample_nearest2(x);
  CHECK(y->value.shape() == std::vector<int>{1, 1, 4, 4});
  CHECK(y->value.at(0, 0, 0, 1) == 1.0f);
  CHECK(y->value.at(0, 0, 1, 1) == 1.0f);
  CHECK(y->value.at(0, 0, 2, 3) == 4.0f);
}

TEST_CASE("backward of sum is all ones; mean(x*x) analytic") {
  auto x = make_leaf(rand_t({2, 1, 3, 4}, 17), true);
  backward(sum_all(x));
  REQUIRE(x->grad.same_shape(x->value));
  for (int64_t i = 0; i < x->grad.numel(); ++i) CHECK(x->grad[i] == 1.0f);

  auto v = make_leaf(DenseTensor({1, 1, 1, 3}, {1, 2, 3}), true);
  backward(mean_all(mul(v, v)));
  CHECK(v->grad[0] == doctest::Approx(2.0f / 3.0f));
  CHECK(v->grad[1] == doctest::Approx(4.0f / 3.0f));
  CHECK(v->grad[2] == doctest::Approx(2.0f));
}

TEST_CASE("backward rejects non-scalar roots and is idempotent per pass") {
  auto x = make_leaf(rand_t({1, 1, 2, 2}, 19), true);
  CHECK_THROWS_AS(backward(mul(x, x)), std::invalid_argument);

  auto loss = mean_all(mul(x, x));
  backward(loss);
  DenseTensor first = x->grad;
  backward(loss);
  for (int64_t i = 0; i < first.numel(); ++i) CHECK(x->grad[i] == first[i]);
}

TEST_CASE("backward linearity") {
  auto x = make_leaf(rand_t({1, 2, 4, 4}, 23), true);
  const float a = 1.7f, b = -0.6f;

  auto f = [&](const NodePtr& n) { return mean_all(mul(n, n)); };
  auto g = [&](const NodePtr& n) { return mean_all(abs_val(n)); };

  backward(f(x));
  DenseTensor gf = x->grad;
  backward(g(x));
  DenseTensor gg = x->grad;
  backward(add(scale(f(x), a), scale(g(x), b)));
  for (int64_t i = 0; i < gf.numel(); ++i)
    CHECK(x->grad[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-6));
}

TEST_CASE("determinism: identical graphs give bit-identical values and grads") {
  auto run = [] {
    auto x = make_leaf(rand_t({1, 2, 6, 6}, 29), true);
    auto k = make_leaf(rand_t({3, 2, 3, 3}, 31), true);
    auto loss = mean_all(leaky_relu(conv2d(x, k, 1, 1), 0.2f));
    backward(loss);
    return std::tuple{loss->value[0], x->grad, k->grad};
  };
  auto [l1, gx1, gk1] = run();
  auto [l2, gx2, gk2] = run();
  CHECK(std::memcmp(&l1, &l2, 4) == 0);
  CHECK(std::memcmp(gx1.data(), gx2.data(), size_t(gx1.numel()) * 4) == 0);
  CHECK(std::memcmp(gk1.data(), gk2.data(), size_t(gk1.numel()) * 4) == 0);
}

TEST_CASE("finite differences: conv2d DERIVED oracle case") {
  // Random 2x3x8x8 input against a 4x3x3x3 kernel.
  Rng rng(101);
  DenseTensor x({2, 3, 8, 8}), k({4, 3, 3, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = float(rng.uniform(-1, 1));
  for (int64_t i = 0; i < k.numel(); ++i) k[i] = float(rng.uniform(-1, 1));
  auto rep = gradcheck::check("conv", [](const std::vector<NodePtr>& in) {
    return sum_all(conv2d(in[0], in[1], 1, 0));
  }, [](const std::vector<gradcheck::DTensor>& in) {
    return gradcheck::dref::sum_all(gradcheck::dref::conv2d(in[0], in[1], 1, 0));
  }, {x, k});
  CAPTURE(rep.max_rel_err);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("finite differences: composite conv -> leaky -> mean") {
  Rng rng(103);
  DenseTensor x({1, 2, 6, 6}), k({3, 2, 3, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = float(rng.uniform(-1, 1));
  for (int64_t i = 0; i < k.numel(); ++i) k[i] = float(rng.uniform(-1, 1));
  auto rep = gradcheck::check("composite", [](const std::vector<NodePtr>& in) {
    return mean_all(leaky_relu(conv2d(in[0], in[1], 1, 0), 0.2f));
  }, [](const std::vector<gradcheck::DTensor>& in) {
    return gradcheck::dref::mean_all(gradcheck::dref::leaky_relu(
        gradcheck::dref::conv2d(in[0], in[1], 1, 0), double(0.2f)));
  }, {x, k});
  CAPTURE(rep.max_rel_err);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("all ops stay finite on finite inputs") {
  auto x = make_leaf(rand_t({2, 2, 6, 6}, 37, -3, 3), true);
  auto k = make_leaf(rand_t({2, 2, 3, 3}, 41, -3, 3), true);
  auto y = conv2d(x, k, 1, 1);
  y = instance_norm(y);
  y = sigmoid(y);
  y = leaky_relu(y, 0.2f);
  auto l = add(mean_all(huber(y, 1.0f)), bce_with_logits_mean(y, 1.0f));
  CHECK(l->value.all_finite());
  backward(l);
  CHECK(x->grad.all_finite());
  CHECK(k->grad.all_finite());
}
