#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "timr/gradcheck.hpp"
#include "timr/losses.hpp"
#include "timr/rng.hpp"

using namespace timr;
using namespace timr::losses;

namespace {

NodePtr leaf(std::vector<float> v, std::vector<int> shape, bool grad = false) {
  return make_leaf(DenseTensor(std::move(shape), std::move(v)), grad);
}

DenseTensor rand_t(std::vector<int> shape, uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  DenseTensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("ce maps") {
  auto xe = leaf({1, 2}, {1, 1, 1, 2});
  auto yl = leaf({3, 0}, {1, 1, 1, 2});
  auto [ce_r, ce_g] = ce_maps(xe, yl, yl);
  CHECK(ce_r->value[0] == doctest::Approx(2.0));
  CHECK(ce_r->value[1] == doctest::Approx(2.0));
  // Generated equal to real gives identical maps.
  for (int i = 0; i < 2; ++i) CHECK(ce_g->value[i] == ce_r->value[i]);

  auto same = ce_maps(xe, xe, xe);
  CHECK(same.first->value[0] == 0.0f);
  CHECK(same.first->value[1] == 0.0f);
}

TEST_CASE("ce loss values") {
  auto a = leaf({1, 1}, {1, 1, 1, 2});
  auto b = leaf({0, 2}, {1, 1, 1, 2});
  CHECK(ce_loss(a, a)->value[0] == 0.0f);
  CHECK(ce_loss(a, b)->value[0] == doctest::Approx(1.0));

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = make_leaf(rand_t({1, 1, 4, 4}, 100 + trial, -2, 2), false);
    auto y = make_leaf(rand_t({1, 1, 4, 4}, 200 + trial, -2, 2), false);
    CHECK(ce_loss(x, y)->value[0] >= 0.0f);
  }
}

TEST_CASE("ti loss closed-form regimes") {
  // |a| = 0.5 everywhere, delta 1 -> 0.5 * 0.25 = 0.125.
  auto r = leaf(std::vector<float>(24, 0.5f), {1, 1, 4, 6});
  auto z = leaf(std::vector<float>(24, 0.0f), {1, 1, 4, 6});
  CHECK(std::fabs(double(ti_loss(r, z, 1.0f)->value[0]) - 0.125) < 1e-6);

  // |a| = 2 everywhere, delta 1 -> 1 * (2 - 0.5) = 1.5.
  auto two = leaf(std::vector<float>(24, 2.0f), {1, 1, 4, 6});
  CHECK(std::fabs(double(ti_loss(two, z, 1.0f)->value[0]) - 1.5) < 1e-6);

  CHECK(ti_loss(r, r, 1.0f)->value[0] == 0.0f);
  CHECK_THROWS_AS(ti_loss(r, z, 0.0f), std::invalid_argument);
}

TEST_CASE("huber-L1 relation and large-delta limit") {
  // All |CE_r - CE_g| >= delta: per-pixel ti = delta * ce - delta^2 / 2.
  const float delta = 0.6f;
  auto ce_r = make_leaf(rand_t({1, 1, 5, 5}, 31, 1.0, 3.0), false);
  auto ce_g = make_leaf(DenseTensor({1, 1, 5, 5}), false);
  const double ti = ti_loss(ce_r, ce_g, delta)->value[0];
  const double ce = ce_loss(ce_r, ce_g)->value[0];
  CHECK(ti == doctest::Approx(delta * ce - 0.5 * delta * delta).epsilon(1e-5));

  // Large delta: quadratic everywhere, ti -> mean(a^2) / 2.
  double sq = 0;
  for (int64_t i = 0; i < 25; ++i) sq += double(ce_r->value[i]) * double(ce_r->value[i]);
  const double ti_big = ti_loss(ce_r, ce_g, 100.0f)->value[0];
  CHECK(ti_big == doctest::Approx(0.5 * sq / 25.0).epsilon(1e-5));
}

TEST_CASE("ti loss gradient: zero at the minimum, magnitude bounded by delta") {
  const float delta = 0.8f;
  auto xe = make_leaf(rand_t({1, 1, 6, 6}, 41, 0.5, 1.5), false);
  auto yl = make_leaf(rand_t({1, 1, 6, 6}, 42, 0.5, 2.5), false);

  SUBCASE("gradient vanishes when generated equals real") {
    auto ygen = make_leaf(yl->value, true);
    auto [ce_r, ce_g] = ce_maps(xe, yl, ygen);
    backward(ti_loss(ce_r, ce_g, delta));
    for (int64_t i = 0; i < ygen->grad.numel(); ++i)
      CHECK(ygen->grad[i] == 0.0f);
  }

  SUBCASE("per-pixel gradient magnitude clipped") {
    const int64_t n = 36;
    auto ygen = make_leaf(rand_t({1, 1, 6, 6}, 43, -4.0, 6.0), true);
    auto [ce_r, ce_g] = ce_maps(xe, yl, ygen);
    backward(ti_loss(ce_r, ce_g, delta));
    for (int64_t i = 0; i < n; ++i) {
      CHECK(std::fabs(double(ygen->grad[i])) <= double(delta) / double(n) + 1e-9);
      CHECK(std::fabs(double(ygen->grad[i])) <= double(delta));
    }
  }
}

TEST_CASE("gan losses") {
  auto zeros = leaf(std::vector<float>(16, 0.0f), {1, 1, 4, 4});
  auto [d_loss, g_adv] = gan_losses(zeros, zeros);
  CHECK(d_loss->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(g_adv->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  auto big = leaf(std::vector<float>(16, 30.0f), {1, 1, 4, 4});
  auto neg = leaf(std::vector<float>(16, -30.0f), {1, 1, 4, 4});
  auto [d_perfect, g_unused] = gan_losses(big, neg);
  (void)g_unused;
  CHECK(d_perfect->value[0] < 1e-9);

  // Non-saturating generator loss pushes fake logits upward: the analytic
  // gradient and an independent finite difference are both negative.
  auto l = make_leaf(DenseTensor({1, 1, 1, 1}, {0.3f}), true);
  backward(g_adv_loss(l));
  CHECK(l->grad[0] < 0.0f);
  gradcheck::DTensor dl(l->value);
  const double h = 1e-5;
  dl.v[0] = 0.3 + h;
  const double fp = gradcheck::dref::bce_with_logits_mean(dl, 1.0);
  dl.v[0] = 0.3 - h;
  const double fm = gradcheck::dref::bce_with_logits_mean(dl, 1.0);
  CHECK((fp - fm) / (2 * h) < 0.0);
  CHECK(l->grad[0] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-3));
}

TEST_CASE("generator objective composition") {
  auto xe = make_leaf(rand_t({2, 1, 4, 4}, 61, 0.2, 1.0), false);
  auto yl = make_leaf(rand_t({2, 1, 4, 4}, 62, 0.2, 2.0), false);
  auto ygen = make_leaf(rand_t({2, 1, 4, 4}, 63, 0.2, 2.0), false);
  auto logits = make_leaf(rand_t({2, 1, 4, 4}, 64, -1.0, 1.0), false);

  SUBCASE("zero weights reduce to the adversarial term") {
    LossWeights w;
    w.lambda_i = 0;
    w.lambda_ti = 0;
    auto obj = generator_objective(xe, yl, ygen, logits, w, Variant::TIPAN);
    CHECK(obj.total->value[0] == doctest::Approx(obj.adv->value[0]).epsilon(1e-7));
  }

  SUBCASE("perfect generation zeroes both data terms") {
    LossWeights w;
    auto obj = generator_objective(xe, yl, yl, logits, w, Variant::TIPAN);
    CHECK(obj.pixel->value[0] == 0.0f);
    CHECK(obj.enhancement->value[0] == 0.0f);
  }

  SUBCASE("quadratic regime matches half mean square") {
    LossWeights w;
    w.delta = 100.0f;  // everything in the quadratic regime
    auto obj = generator_objective(xe, yl, ygen, logits, w, Variant::TIPAN);
    auto [ce_r, ce_g] = ce_maps(xe, yl, ygen);
    double sq = 0;
    for (int64_t i = 0; i < ce_r->value.numel(); ++i) {
      const double d = double(ce_r->value[i]) - double(ce_g->value[i]);
      sq += d * d;
    }
    CHECK(obj.enhancement->value[0] ==
          doctest::Approx(0.5 * sq / double(ce_r->value.numel())).epsilon(1e-5));
  }

  SUBCASE("variants wire the right enhancement term") {
    LossWeights w;
    auto pan = generator_objective(xe, yl, ygen, logits, w, Variant::PAN);
    CHECK(pan.enhancement->value[0] == 0.0f);
    CHECK(pan.total->value[0] ==
          doctest::Approx(pan.adv->value[0] + 100.0 * pan.pixel->value[0]).epsilon(1e-5));
    auto cep = generator_objective(xe, yl, ygen, logits, w, Variant::CEPAN);
    auto [ce_r, ce_g] = ce_maps(xe, yl, ygen);
    CHECK(cep.enhancement->value[0] ==
          doctest::Approx(double(ce_loss(ce_r, ce_g)->value[0])).epsilon(1e-6));
    auto tip = generator_objective(xe, yl, ygen, logits, w, Variant::TIPAN);
    CHECK(tip.enhancement->value[0] ==
          doctest::Approx(double(ti_loss(ce_r, ce_g, w.delta)->value[0])).epsilon(1e-6));
  }
}

TEST_CASE("loss gradients match finite differences on a composite objective") {
  auto xe_t = rand_t({1, 1, 5, 5}, 71, 0.3, 1.2);
  auto yl_t = rand_t({1, 1, 5, 5}, 72, 0.3, 2.2);
  auto ygen_t = rand_t({1, 1, 5, 5}, 73, 0.3, 2.2);
  const float delta = 0.7f;
  auto rep = gradcheck::check(
      "losses.composite",
      [&](const std::vector<NodePtr>& in) {
        auto [ce_r, ce_g] = ce_maps(make_const(xe_t), make_const(yl_t), in[0]);
        auto pix = ops::mean_all(ops::abs_val(ops::sub(in[0], make_const(yl_t))));
        return ops::add(ops::add(ti_loss(ce_r, ce_g, delta), ce_loss(ce_r, ce_g)),
                        pix);
      },
      [&](const std::vector<gradcheck::DTensor>& in) {
        namespace dref = gradcheck::dref;
        gradcheck::DTensor xe(xe_t), yl(yl_t);
        auto ce_r = dref::abs_val(dref::sub(yl, xe));
        auto ce_g = dref::abs_val(dref::sub(in[0], xe));
        const double ti = dref::mean_all(dref::huber(dref::sub(ce_r, ce_g), delta));
        const double ce = dref::mean_all(dref::abs_val(dref::sub(ce_r, ce_g)));
        const double pix = dref::mean_all(dref::abs_val(dref::sub(in[0], yl)));
        return ti + ce + pix;
      },
      {ygen_t});
  CAPTURE(rep.max_rel_err);
  CHECK(rep.max_rel_err < 1e-3);
}
