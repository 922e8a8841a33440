#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "timr/io.hpp"
#include "timr/train.hpp"

using namespace timr;
using namespace timr::train;

namespace {

model::ParamStore scalar_store(float v) {
  model::ParamStore st;
  st.items.push_back({"w", make_leaf(DenseTensor({1}, {v}), true)});
  return st;
}

void set_grad(model::ParamStore& st, float g) {
  auto& node = st.items[0].node;
  node->grad = DenseTensor({1}, {g});
  node->grad_ready = true;
}

std::filesystem::path make_tiny_dataset(const std::filesystem::path& dir,
                                        int n_train, int n_test, uint64_t seed) {
  std::filesystem::remove_all(dir);
  phantom::PhantomConfig cfg;
  cfg.n_cases = n_train + n_test;
  cfg.height = 64;
  cfg.width = 64;
  cfg.lesions_per_case = 1;
  cfg.noise_sd = 1.0;
  cfg.seed = seed;
  phantom::Dataset ds;
  ds.cases = phantom::generate_phantom(cfg);
  for (int i = 0; i < n_train + n_test; ++i)
    ds.split.push_back(i < n_train ? "train" : "test");
  ds.config_echo_json = R"({"kind":"tiny"})";
  phantom::write_dataset(ds, dir);
  return dir;
}

TrainConfig tiny_train_cfg() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.seed = 99;
  cfg.gen.n_scpa_blocks = 1;
  cfg.gen.channels_down = 8;
  cfg.gen.channels_up = 8;
  cfg.disc.widths = {8, 12};
  return cfg;
}

std::vector<std::vector<double>> read_log(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(bool(f));
  std::string line;
  std::getline(f, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

bool file_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto st = scalar_store(0.7f);
  auto opt = OptimizerState::for_store(st);
  set_grad(st, 0.0f);
  adam_step(st, opt, 0.1, 0.9, 0.999, 1e-8);
  CHECK(st.items[0].node->value[0] == 0.7f);
}

TEST_CASE("adam: first step with unit gradient moves by -lr") {
  auto st = scalar_store(0.0f);
  auto opt = OptimizerState::for_store(st);
  set_grad(st, 1.0f);
  adam_step(st, opt, 0.1, 0.9, 0.999, 1e-8);
  CHECK(st.items[0].node->value[0] == doctest::Approx(-0.1).epsilon(1e-5));
}

TEST_CASE("adam: converges on (w-3)^2 within 500 steps") {
  auto st = scalar_store(-4.0f);
  auto opt = OptimizerState::for_store(st);
  for (int i = 0; i < 500; ++i) {
    const float w = st.items[0].node->value[0];
    set_grad(st, 2.0f * (w - 3.0f));
    adam_step(st, opt, 0.1, 0.9, 0.999, 1e-8);
  }
  CHECK(std::fabs(st.items[0].node->value[0] - 3.0f) < 1e-2);
}

TEST_CASE("adam: non-finite gradients abort the step") {
  auto st = scalar_store(0.0f);
  auto opt = OptimizerState::for_store(st);
  set_grad(st, std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_AS(adam_step(st, opt, 0.1, 0.9, 0.999, 1e-8), std::runtime_error);
}

TEST_CASE("config json round-trip and validation") {
  TrainConfig cfg = tiny_train_cfg();
  cfg.variant = losses::Variant::CEPAN;
  cfg.norm_method = prep::NormMethod::MinMax;
  TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.variant == cfg.variant);
  CHECK(back.norm_method == cfg.norm_method);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.gen.channels_down == cfg.gen.channels_down);
  CHECK(back.disc.widths == cfg.disc.widths);

  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero-epoch run writes the initial checkpoint; synthesis is identity") {
  const auto root = std::filesystem::temp_directory_path() / "timr_train0";
  std::filesystem::remove_all(root);
  const auto data = make_tiny_dataset(root / "data", 4, 2, 11);
  TrainConfig cfg = tiny_train_cfg();
  cfg.epochs = 0;
  auto res = timr::train::train(data, cfg, root / "run");
  CHECK(res.steps == 0);
  auto loaded = model::load_params(res.final_checkpoint / "generator");
  CHECK(loaded.step == 0);

  auto synth = synthesize(res.final_checkpoint, data, "test", root / "synth");
  CHECK(synth.case_ids.size() == 2);
  const auto ds = phantom::read_dataset(data);
  for (const auto* tc : split_cases(ds, "test")) {
    DenseTensor gen = io::read_tensor(root / "synth" / (tc->case_id + "_gen.bin"));
    REQUIRE(gen.same_shape(tc->early));
    for (int64_t i = 0; i < gen.numel(); ++i)
      CHECK(std::fabs(gen[i] - tc->early[i]) <= 1e-4 * std::fabs(tc->early[i]) + 1e-4);
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("training runs, logs a consistent ledger, and is reproducible") {
  const auto root = std::filesystem::temp_directory_path() / "timr_train1";
  std::filesystem::remove_all(root);
  const auto data = make_tiny_dataset(root / "data", 6, 2, 21);
  TrainConfig cfg = tiny_train_cfg();

  auto res1 = timr::train::train(data, cfg, root / "run1");
  CHECK(res1.steps == 6);  // 6 cases / batch 2 * 2 epochs

  const auto rows = read_log(res1.log_path);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    REQUIRE(r.size() == 6);
    const double g_total = r[5], g_adv = r[2], l_i = r[3], l_ti = r[4];
    CHECK(std::fabs(g_total - (g_adv + 100.0 * l_i + 100.0 * l_ti)) <=
          1e-5 * std::max(1.0, std::fabs(g_total)));
  }

  auto res2 = timr::train::train(data, cfg, root / "run2");
  CHECK(file_equal(res1.log_path, res2.log_path));
  for (const char* side : {"generator", "discriminator"}) {
    auto a = model::load_params(res1.final_checkpoint / side);
    auto b = model::load_params(res2.final_checkpoint / side);
    REQUIRE(a.store.items.size() == b.store.items.size());
    for (size_t i = 0; i < a.store.items.size(); ++i) {
      const auto& ta = a.store.items[i].node->value;
      const auto& tb = b.store.items[i].node->value;
      CHECK(std::memcmp(ta.data(), tb.data(), size_t(ta.numel()) * 4) == 0);
    }
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("variant wiring shows up in the training log") {
  const auto root = std::filesystem::temp_directory_path() / "timr_train2";
  std::filesystem::remove_all(root);
  const auto data = make_tiny_dataset(root / "data", 4, 0, 31);
  TrainConfig cfg = tiny_train_cfg();
  cfg.epochs = 1;

  cfg.variant = losses::Variant::PAN;
  auto pan = timr::train::train(data, cfg, root / "pan");
  for (const auto& r : read_log(pan.log_path)) CHECK(r[4] == 0.0);

  cfg.variant = losses::Variant::TIPAN;
  auto tipan = timr::train::train(data, cfg, root / "tipan");
  bool any_nonzero = false;
  for (const auto& r : read_log(tipan.log_path)) any_nonzero = any_nonzero || r[4] > 0;
  CHECK(any_nonzero);
  std::filesystem::remove_all(root);
}

TEST_CASE("pixel loss decreases over a short training run") {
  const auto root = std::filesystem::temp_directory_path() / "timr_train3";
  std::filesystem::remove_all(root);
  const auto data = make_tiny_dataset(root / "data", 8, 0, 41);
  TrainConfig cfg = tiny_train_cfg();
  cfg.epochs = 4;
  auto res = timr::train::train(data, cfg, root / "run");
  const auto rows = read_log(res.log_path);
  REQUIRE(rows.size() == 16);
  double first_epoch = 0, last_epoch = 0;
  for (int i = 0; i < 4; ++i) first_epoch += rows[size_t(i)][3];
  for (int i = 12; i < 16; ++i) last_epoch += rows[size_t(i)][3];
  CHECK(last_epoch < first_epoch);
  std::filesystem::remove_all(root);
}

TEST_CASE("per-method case normalization states") {
  phantom::PhantomConfig pcfg;
  pcfg.n_cases = 1;
  pcfg.height = 64;
  pcfg.width = 64;
  pcfg.lesions_per_case = 1;
  pcfg.seed = 3;
  auto tc = phantom::generate_phantom(pcfg)[0];

  auto ti = case_norm(tc, prep::NormMethod::TINorm);
  CHECK(ti.input_state.method == prep::NormMethod::TINorm);
  CHECK(ti.input_state.offset == ti.target_state.offset);
  CHECK(ti.input_state.scale == ti.target_state.scale);

  auto mm = case_norm(tc, prep::NormMethod::MinMax);
  CHECK(mm.input_state.method == prep::NormMethod::MinMax);
  // Per-image statistics: early and late states differ.
  CHECK(mm.input_state.scale != mm.target_state.scale);
}
