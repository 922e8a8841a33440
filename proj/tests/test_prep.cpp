#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "timr/prep.hpp"
#include "timr/rng.hpp"

using namespace timr;
using namespace timr::prep;

namespace {

DenseTensor plane(std::vector<float> v, int h, int w) {
  return DenseTensor({h, w}, std::move(v));
}

double plane_mean(const DenseTensor& p) {
  double acc = 0;
  for (int64_t i = 0; i < p.numel(); ++i) acc += p[i];
  return acc / double(p.numel());
}

}  // namespace

TEST_CASE("ti-norm standardizes every plane by the pre-contrast statistics") {
  phantom::CaseTriplet tc;
  tc.pre = plane({1, 3, 1, 3}, 2, 2);    // mean 2, population sd 1
  tc.early = plane({2, 4, 2, 4}, 2, 2);
  tc.late = plane({3, 5, 3, 5}, 2, 2);
  auto n = ti_norm(tc);
  CHECK(n.state.offset == doctest::Approx(2.0));
  CHECK(n.state.scale == doctest::Approx(1.0));
  const float exp_pre[] = {-1, 1, -1, 1};
  const float exp_early[] = {0, 2, 0, 2};
  const float exp_late[] = {1, 3, 1, 3};
  for (int i = 0; i < 4; ++i) {
    CHECK(n.pre[i] == doctest::Approx(exp_pre[i]));
    CHECK(n.early[i] == doctest::Approx(exp_early[i]));
    CHECK(n.late[i] == doctest::Approx(exp_late[i]));
  }
}

TEST_CASE("min-max and z-score known values") {
  auto p = plane({0, 5, 10}, 1, 3);
  auto mm = apply_norm(p, minmax_state(p));
  CHECK(mm[0] == doctest::Approx(0.0));
  CHECK(mm[1] == doctest::Approx(0.5));
  CHECK(mm[2] == doctest::Approx(1.0));

  auto q = plane({1, 2, 3}, 1, 3);
  auto zs = apply_norm(q, zscore_state(q));
  CHECK(zs[0] == doctest::Approx(-1.224745).epsilon(1e-5));
  CHECK(zs[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(zs[2] == doctest::Approx(1.224745).epsilon(1e-5));
}

TEST_CASE("constant planes are rejected, not clamped") {
  auto c = DenseTensor::full({4, 4}, 7.0f);
  CHECK_THROWS_AS(minmax_state(c), std::domain_error);
  CHECK_THROWS_AS(zscore_state(c), std::domain_error);
  CHECK_THROWS_AS(ti_state(c), std::domain_error);
}

TEST_CASE("inverse of forward is the identity within 1e-5 relative") {
  Rng rng(55);
  DenseTensor p({16, 16});
  for (int64_t i = 0; i < p.numel(); ++i) p[i] = float(rng.uniform(10.0, 400.0));
  for (auto method : {NormMethod::MinMax, NormMethod::ZScore, NormMethod::TINorm}) {
    NormState st = method == NormMethod::MinMax   ? minmax_state(p)
                   : method == NormMethod::ZScore ? zscore_state(p)
                                                  : ti_state(p);
    DenseTensor back = invert_norm(apply_norm(p, st), st);
    for (int64_t i = 0; i < p.numel(); ++i)
      CHECK(std::fabs(back[i] - p[i]) <= 1e-5 * std::fabs(p[i]));
  }
}

TEST_CASE("shared-affine property of ti-norm") {
  Rng rng(77);
  phantom::CaseTriplet tc;
  tc.pre = DenseTensor({8, 8});
  tc.early = DenseTensor({8, 8});
  tc.late = DenseTensor({8, 8});
  for (int64_t i = 0; i < 64; ++i) {
    tc.pre[i] = float(rng.uniform(50, 150));
    tc.early[i] = float(rng.uniform(60, 220));
    tc.late[i] = float(rng.uniform(60, 260));
  }
  auto n = ti_norm(tc);
  const double sigma = n.state.scale;
  for (int64_t i = 0; i < 64; ++i) {
    const double lhs = double(n.late[i]) - double(n.early[i]);
    const double rhs = (double(tc.late[i]) - double(tc.early[i])) / sigma;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
    // Enhancement sign is preserved pixelwise.
    CHECK((tc.late[i] - tc.early[i] > 0) == (n.late[i] - n.early[i] > 0));
  }
}

TEST_CASE("per-image normalization distorts kinetics; ti-norm does not") {
  // Late is a scalar multiple of early (+20%, a persistent rise). Per-image
  // min-max maps both to identical planes, so the measured enhancement
  // collapses to 0% (plateau); the ti route returns the raw planes exactly.
  phantom::CaseTriplet tc;
  tc.pre = plane({10, 20, 30, 40}, 2, 2);
  tc.early = plane({20, 240, 120, 120}, 2, 2);
  tc.late = plane({24, 288, 144, 144}, 2, 2);

  auto eps_of = [](const DenseTensor& e, const DenseTensor& l) {
    return 100.0 * (plane_mean(l) - plane_mean(e)) / plane_mean(e);
  };
  auto classify = [](double eps) {
    return eps > 10.0 ? "persistent" : (eps < -10.0 ? "washout" : "plateau");
  };

  const double eps_raw = eps_of(tc.early, tc.late);
  CHECK(eps_raw == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(classify(eps_raw) == std::string("persistent"));

  // Per-image min-max route.
  auto e_mm = apply_norm(tc.early, minmax_state(tc.early));
  auto l_mm = apply_norm(tc.late, minmax_state(tc.late));
  const double eps_mm = eps_of(e_mm, l_mm);
  CHECK(classify(eps_mm) == std::string("plateau"));  // kinetic class flipped

  // TI route: forward then exact inverse recovers the raw kinetics.
  auto n = ti_norm(tc);
  auto e_back = invert_norm(n.early, n.state);
  auto l_back = invert_norm(n.late, n.state);
  const double eps_ti = eps_of(e_back, l_back);
  CHECK(classify(eps_ti) == std::string("persistent"));
  CHECK(eps_ti == doctest::Approx(eps_raw).epsilon(1e-6));
}

TEST_CASE("norm state serialization round-trip") {
  NormState s{NormMethod::ZScore, 123.5, 7.25};
  NormState t = norm_state_from_json(norm_state_to_json(s));
  CHECK(t.method == s.method);
  CHECK(t.offset == s.offset);
  CHECK(t.scale == s.scale);
}
