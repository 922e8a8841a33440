#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "timr/io.hpp"
#include "timr/phantom.hpp"

using namespace timr;
using namespace timr::phantom;

namespace {

// Independent recomputation of the percent enhancement over a 3x3 core.
double core_eps(const CaseTriplet& tc, const RoiBox& roi) {
  const int r = roi.center_row(), c = roi.center_col();
  double e = 0, l = 0;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      e += tc.early[(r + dr) * tc.width() + (c + dc)];
      l += tc.late[(r + dr) * tc.width() + (c + dc)];
    }
  return 100.0 * (l - e) / e;
}

double core_washin(const CaseTriplet& tc, const RoiBox& roi) {
  const int r = roi.center_row(), c = roi.center_col();
  double p = 0, e = 0;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      p += tc.pre[(r + dr) * tc.width() + (c + dc)];
      e += tc.early[(r + dr) * tc.width() + (c + dc)];
    }
  return (e - p) / p;
}

KineticLabel classify_eps(double eps) {
  if (eps > 10.0) return KineticLabel::Persistent;
  if (eps < -10.0) return KineticLabel::Washout;
  return KineticLabel::Plateau;
}

PhantomConfig small_cfg() {
  PhantomConfig cfg;
  cfg.n_cases = 6;
  cfg.height = 96;
  cfg.width = 96;
  cfg.lesions_per_case = 2;
  cfg.noise_sd = 0.0;
  cfg.seed = 2024;
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  PhantomConfig cfg = small_cfg();
  cfg.height = 16;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cfg();
  cfg.label_mix = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cfg();
  cfg.noise_sd = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("noise-free cases satisfy the label rules by construction") {
  auto cases = generate_phantom(small_cfg());
  REQUIRE(cases.size() == 6);
  int n_rois = 0;
  for (const auto& tc : cases) {
    CHECK(tc.pre.same_shape(tc.early));
    CHECK(tc.pre.same_shape(tc.late));
    CHECK(tc.pre.all_finite());
    CHECK(tc.early.all_finite());
    CHECK(tc.late.all_finite());
    for (int64_t i = 0; i < tc.pre.numel(); ++i) CHECK(tc.pre[i] > 0.0f);
    for (const auto& roi : tc.rois) {
      ++n_rois;
      CHECK(roi.row0 >= 0);
      CHECK(roi.col0 >= 0);
      CHECK(roi.row1 <= tc.height());
      CHECK(roi.col1 <= tc.width());
      CHECK(roi.row1 - roi.row0 >= 3);
      CHECK(roi.col1 - roi.col0 >= 3);
      const double eps = core_eps(tc, roi);
      CHECK(eps == doctest::Approx(roi.true_eps).epsilon(1e-4));
      CHECK(classify_eps(eps) == roi.true_label);
      CHECK(classify_eps(roi.true_eps) == roi.true_label);
      // Lesion wash-in at least +50% over pre-contrast.
      CHECK(core_washin(tc, roi) >= 0.499);
    }
  }
  CHECK(n_rois == 12);
}

TEST_CASE("persistent-only mix lands above +10% everywhere") {
  PhantomConfig cfg = small_cfg();
  cfg.label_mix = {1.0, 0.0, 0.0};
  for (const auto& tc : generate_phantom(cfg))
    for (const auto& roi : tc.rois) {
      CHECK(core_eps(tc, roi) > 10.0);
      CHECK(roi.true_label == KineticLabel::Persistent);
    }
}

TEST_CASE("zero lesions leaves valid planes with baseline tissue kinetics") {
  PhantomConfig cfg = small_cfg();
  cfg.lesions_per_case = 0;
  auto cases = generate_phantom(cfg);
  for (const auto& tc : cases) {
    CHECK(tc.rois.empty());
    // Sample tissue near the center: enhancement close to the +2% baseline.
    RoiBox probe{tc.height() / 2 - 2, tc.width() / 2 - 2, tc.height() / 2 + 3,
                 tc.width() / 2 + 3, KineticLabel::Plateau, 0.0};
    const double eps = core_eps(tc, probe);
    CHECK(eps > -4.0);
    CHECK(eps < 8.0);
  }
}

TEST_CASE("same seed gives bit-identical datasets; different seed differs") {
  PhantomConfig cfg = small_cfg();
  cfg.noise_sd = 1.5;
  auto a = generate_phantom(cfg);
  auto b = generate_phantom(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].pre.data(), b[i].pre.data(), size_t(a[i].pre.numel()) * 4) == 0);
    CHECK(std::memcmp(a[i].early.data(), b[i].early.data(), size_t(a[i].early.numel()) * 4) == 0);
    CHECK(std::memcmp(a[i].late.data(), b[i].late.data(), size_t(a[i].late.numel()) * 4) == 0);
  }
  cfg.seed += 1;
  auto c = generate_phantom(cfg);
  CHECK(std::memcmp(a[0].pre.data(), c[0].pre.data(), size_t(a[0].pre.numel()) * 4) != 0);
}

TEST_CASE("percent enhancement is invariant under a common gain") {
  auto cases = generate_phantom(small_cfg());
  const auto& tc = cases[0];
  REQUIRE(!tc.rois.empty());
  CaseTriplet scaled = tc;
  for (int64_t i = 0; i < scaled.pre.numel(); ++i) {
    scaled.pre[i] *= 3.25f;
    scaled.early[i] *= 3.25f;
    scaled.late[i] *= 3.25f;
  }
  for (const auto& roi : tc.rois)
    CHECK(core_eps(scaled, roi) == doctest::Approx(core_eps(tc, roi)).epsilon(1e-6));
}

TEST_CASE("degenerate geometry is rejected") {
  PhantomConfig cfg;
  cfg.n_cases = 1;
  cfg.height = 32;
  cfg.width = 32;
  cfg.lesions_per_case = 8;
  cfg.noise_sd = 0.0;
  CHECK_THROWS_AS(generate_phantom(cfg), std::invalid_argument);
}

TEST_CASE("dataset round-trip and error kinds") {
  const auto dir = std::filesystem::temp_directory_path() / "timr_test_ds";
  std::filesystem::remove_all(dir);
  PhantomConfig cfg = small_cfg();
  cfg.n_cases = 3;
  cfg.noise_sd = 1.0;
  Dataset ds;
  ds.cases = generate_phantom(cfg);
  ds.split = {"train", "train", "test"};
  ds.config_echo_json = R"({"n_cases":3})";
  write_dataset(ds, dir);

  Dataset back = read_dataset(dir);
  REQUIRE(back.cases.size() == 3);
  CHECK(back.split == ds.split);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.cases[i].case_id == ds.cases[i].case_id);
    CHECK(back.cases[i].seed == ds.cases[i].seed);
    CHECK(std::memcmp(back.cases[i].pre.data(), ds.cases[i].pre.data(),
                      size_t(ds.cases[i].pre.numel()) * 4) == 0);
    CHECK(std::memcmp(back.cases[i].late.data(), ds.cases[i].late.data(),
                      size_t(ds.cases[i].late.numel()) * 4) == 0);
    REQUIRE(back.cases[i].rois.size() == ds.cases[i].rois.size());
    for (size_t r = 0; r < ds.cases[i].rois.size(); ++r) {
      CHECK(back.cases[i].rois[r].true_label == ds.cases[i].rois[r].true_label);
      CHECK(back.cases[i].rois[r].true_eps ==
            doctest::Approx(ds.cases[i].rois[r].true_eps));
    }
  }
  CHECK(split_cases(back, "train").size() == 2);
  CHECK(split_cases(back, "test").size() == 1);

  SUBCASE("bad magic") {
    const auto victim = dir / "cases" / ds.cases[0].case_id / "pre.bin";
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.write("JUNK", 4);
    f.close();
    try {
      read_dataset(dir);
      FAIL("expected BadMagic");
    } catch (const io::IoError& e) {
      CHECK(e.kind() == io::ErrorKind::BadMagic);
    }
  }
  SUBCASE("truncated payload") {
    const auto victim = dir / "cases" / ds.cases[1].case_id / "late.bin";
    std::filesystem::resize_file(victim, std::filesystem::file_size(victim) / 2);
    try {
      read_dataset(dir);
      FAIL("expected Truncated");
    } catch (const io::IoError& e) {
      CHECK(e.kind() == io::ErrorKind::Truncated);
    }
  }
  SUBCASE("missing sidecar") {
    std::filesystem::remove(dir / "cases" / ds.cases[2].case_id / "case.json");
    try {
      read_dataset(dir);
      FAIL("expected MissingFile");
    } catch (const io::IoError& e) {
      CHECK(e.kind() == io::ErrorKind::MissingFile);
    }
  }
  std::filesystem::remove_all(dir);
}
