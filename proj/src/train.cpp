#include "timr/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "timr/io.hpp"
#include "timr/rng.hpp"

namespace timr::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("train: betas must be in [0, 1)");
  if (!(eps > 0)) throw std::invalid_argument("train: eps must be > 0");
  if (checkpoint_every < 0)
    throw std::invalid_argument("train: checkpoint_every must be >= 0");
  weights.validate();
  gen.validate();
  disc.validate();
}

std::string TrainConfig::to_json() const {
  json j;
  j["variant"] = losses::variant_name(variant);
  j["norm_method"] = prep::norm_name(norm_method);
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["lambda_i"] = weights.lambda_i;
  j["lambda_ti"] = weights.lambda_ti;
  j["delta"] = weights.delta;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["generator"] = {{"n_scpa_blocks", gen.n_scpa_blocks},
                    {"channels_down", gen.channels_down},
                    {"channels_up", gen.channels_up},
                    {"leaky_slope", gen.leaky_slope}};
  j["discriminator"] = {{"widths", disc.widths}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& s) {
  const json j = json::parse(s);
  TrainConfig c;
  c.variant = losses::variant_from_name(j.at("variant").get<std::string>());
  c.norm_method = prep::norm_from_name(j.at("norm_method").get<std::string>());
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.weights.lambda_i = j.at("lambda_i").get<float>();
  c.weights.lambda_ti = j.at("lambda_ti").get<float>();
  c.weights.delta = j.at("delta").get<float>();
  c.seed = j.at("seed").get<uint64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.gen.n_scpa_blocks = j.at("generator").at("n_scpa_blocks").get<int>();
  c.gen.channels_down = j.at("generator").at("channels_down").get<int>();
  c.gen.channels_up = j.at("generator").at("channels_up").get<int>();
  c.gen.leaky_slope = j.at("generator").at("leaky_slope").get<float>();
  c.disc.widths = j.at("discriminator").at("widths").get<std::vector<int>>();
  c.validate();
  return c;
}

OptimizerState OptimizerState::for_store(const model::ParamStore& store) {
  OptimizerState st;
  for (const auto& it : store.items) {
    st.m.emplace_back(it.node->value.shape());
    st.v.emplace_back(it.node->value.shape());
  }
  return st;
}

void adam_step(model::ParamStore& params, OptimizerState& state, double lr,
               double beta1, double beta2, double eps) {
  if (state.m.size() != params.items.size())
    throw std::invalid_argument("adam: optimizer state does not match parameter set");
  for (size_t p = 0; p < params.items.size(); ++p) {
    const auto& node = params.items[p].node;
    if (!node->grad_ready || !node->grad.same_shape(node->value))
      throw std::runtime_error("adam: missing gradient for " + params.items[p].name);
    if (!node->grad.all_finite())
      throw std::runtime_error("adam: non-finite gradient in " + params.items[p].name +
                               " at step " + std::to_string(state.step + 1));
  }
  state.step += 1;
  const float c1 = float(1.0 / (1.0 - std::pow(beta1, double(state.step))));
  const float c2 = float(1.0 / (1.0 - std::pow(beta2, double(state.step))));
  const float b1 = float(beta1), b2 = float(beta2);
  const float lrf = float(lr), epsf = float(eps);
  for (size_t p = 0; p < params.items.size(); ++p) {
    DenseTensor& w = params.items[p].node->value;
    const DenseTensor& g = params.items[p].node->grad;
    DenseTensor& m = state.m[p];
    DenseTensor& v = state.v[p];
    for (int64_t i = 0; i < w.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float m_hat = m[i] * c1;
      const float v_hat = v[i] * c2;
      w[i] -= lrf * m_hat / (std::sqrt(v_hat) + epsf);
    }
  }
}

CaseNorm case_norm(const phantom::CaseTriplet& tc, prep::NormMethod method) {
  CaseNorm cn;
  switch (method) {
    case prep::NormMethod::TINorm:
      cn.input_state = prep::ti_state(tc.pre);
      cn.target_state = cn.input_state;
      break;
    case prep::NormMethod::MinMax:
      cn.input_state = prep::minmax_state(tc.early);
      cn.target_state = prep::minmax_state(tc.late);
      break;
    case prep::NormMethod::ZScore:
      cn.input_state = prep::zscore_state(tc.early);
      cn.target_state = prep::zscore_state(tc.late);
      break;
  }
  return cn;
}

namespace {

// Stacks normalized early/late planes of the given cases into [B,1,H,W].
void assemble_batch(const std::vector<const phantom::CaseTriplet*>& cases,
                    const std::vector<size_t>& idx, size_t first, size_t count,
                    prep::NormMethod method, DenseTensor& x_early,
                    DenseTensor& y_late) {
  const int H = cases[idx[first]]->height();
  const int W = cases[idx[first]]->width();
  x_early = DenseTensor({int(count), 1, H, W});
  y_late = DenseTensor({int(count), 1, H, W});
  for (size_t b = 0; b < count; ++b) {
    const phantom::CaseTriplet& tc = *cases[idx[first + b]];
    if (tc.height() != H || tc.width() != W)
      throw std::invalid_argument("train: case geometry mismatch in batch");
    const CaseNorm cn = case_norm(tc, method);
    const DenseTensor xe = prep::apply_norm(tc.early, cn.input_state);
    const DenseTensor yl = prep::apply_norm(tc.late, cn.target_state);
    std::copy(xe.data(), xe.data() + xe.numel(),
              x_early.data() + int64_t(b) * H * W);
    std::copy(yl.data(), yl.data() + yl.numel(),
              y_late.data() + int64_t(b) * H * W);
  }
}

void save_checkpoint(const std::filesystem::path& dir,
                     const model::GeneratorParams& g,
                     const model::DiscriminatorParams& d,
                     const std::string& config_echo, int64_t step) {
  model::save_params(dir / "generator", g.store, config_echo, step);
  model::save_params(dir / "discriminator", d.store, config_echo, step);
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& cfg,
                  const std::filesystem::path& run_dir) {
  cfg.validate();
  const phantom::Dataset ds = phantom::read_dataset(dataset_dir);
  const auto cases = split_cases(ds, "train");
  if (cases.empty())
    throw std::invalid_argument("train: dataset has no cases in the train split");
  for (const auto* tc : cases)
    if (tc->height() % 2 != 0 || tc->width() % 2 != 0)
      throw std::invalid_argument("train: case " + tc->case_id +
                                  " has odd extents; the generator needs even ones");

  std::filesystem::create_directories(run_dir);
  const std::string echo = cfg.to_json();
  {
    std::ofstream f(run_dir / "config.echo.json", std::ios::trunc);
    f << echo << "\n";
  }

  auto g = model::init_generator(cfg.gen, cfg.seed);
  auto d = model::init_discriminator(cfg.disc, cfg.seed ^ 0x517cc1b727220a95ULL);
  auto g_opt = OptimizerState::for_store(g.store);
  auto d_opt = OptimizerState::for_store(d.store);

  TrainResult result;
  result.run_dir = run_dir;
  result.log_path = run_dir / "train_log.csv";
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write log " + result.log_path.string());
  log << "step,d_loss,g_adv,l_i,l_ti,g_total\n";

  const auto ckpt_root = run_dir / "checkpoints";
  if (cfg.epochs == 0) save_checkpoint(ckpt_root / "final", g, d, echo, 0);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Seeded per-epoch permutation; data order never depends on timing.
    std::vector<size_t> order(cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(epoch + 1)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(shuffle_rng.uniform_int(int64_t(i)))]);

    for (size_t first = 0; first < order.size(); first += size_t(cfg.batch_size)) {
      const size_t count = std::min(size_t(cfg.batch_size), order.size() - first);
      DenseTensor xe_t, yl_t;
      assemble_batch(cases, order, first, count, cfg.norm_method, xe_t, yl_t);
      NodePtr xe = make_const(xe_t);
      NodePtr yl = make_const(yl_t);

      NodePtr y_gen = model::generator_forward(xe, g);

      // Discriminator update on the detached fake.
      NodePtr d_real = model::discriminator_forward(xe, yl, d);
      NodePtr d_fake = model::discriminator_forward(xe, ops::detach(y_gen), d);
      auto [d_loss, g_adv_unused] = losses::gan_losses(d_real, d_fake);
      (void)g_adv_unused;
      if (!std::isfinite(double(d_loss->value[0])))
        throw std::runtime_error("train: discriminator loss diverged at step " +
                                 std::to_string(step + 1));
      backward(d_loss);
      adam_step(d.store, d_opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

      // Generator update through the refreshed discriminator.
      NodePtr d_fake_g = model::discriminator_forward(xe, y_gen, d);
      auto obj = losses::generator_objective(xe, yl, y_gen, d_fake_g, cfg.weights,
                                             cfg.variant);
      if (!std::isfinite(double(obj.total->value[0])))
        throw std::runtime_error("train: generator loss diverged at step " +
                                 std::to_string(step + 1));
      backward(obj.total);
      adam_step(g.store, g_opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

      ++step;
      log << step << "," << fmt_g(double(d_loss->value[0])) << ","
          << fmt_g(double(obj.adv->value[0])) << ","
          << fmt_g(double(obj.pixel->value[0])) << ","
          << fmt_g(double(obj.enhancement->value[0])) << ","
          << fmt_g(double(obj.total->value[0])) << "\n";
    }

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d", epoch + 1);
      save_checkpoint(ckpt_root / name, g, d, echo, step);
    }
  }
  if (cfg.epochs > 0) save_checkpoint(ckpt_root / "final", g, d, echo, step);

  result.final_checkpoint = ckpt_root / "final";
  result.steps = step;
  return result;
}

SynthResult synthesize(const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& dataset_dir,
                       const std::string& split,
                       const std::filesystem::path& out_dir) {
  const auto loaded = model::load_params(checkpoint_dir / "generator");
  if (loaded.config_echo_json.empty())
    throw std::runtime_error("synthesize: checkpoint lacks a config echo");
  const TrainConfig cfg = TrainConfig::from_json(loaded.config_echo_json);
  model::GeneratorParams g{cfg.gen, loaded.store};
  // Rebind in canonical order; names in the index are authoritative.
  {
    std::vector<NodePtr> leaves;
    for (const auto& spec : model::generator_param_specs(cfg.gen))
      leaves.push_back(loaded.store.find(spec.name));
    g = model::generator_from_leaves(cfg.gen, std::move(leaves));
  }

  const phantom::Dataset ds = phantom::read_dataset(dataset_dir);
  const auto cases = split_cases(ds, split);
  if (cases.empty())
    throw std::invalid_argument("synthesize: no cases in split '" + split + "'");

  std::filesystem::create_directories(out_dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["checkpoint_config"] = json::parse(loaded.config_echo_json);
  manifest["split"] = split;
  json entries = json::array();

  SynthResult result;
  result.dir = out_dir;
  for (const auto* tc : cases) {
    if (tc->height() % 2 != 0 || tc->width() % 2 != 0)
      throw std::invalid_argument("synthesize: case " + tc->case_id +
                                  " geometry is incompatible with the generator");
    const CaseNorm cn = case_norm(*tc, cfg.norm_method);
    DenseTensor xe_n = prep::apply_norm(tc->early, cn.input_state);
    DenseTensor input({1, 1, tc->height(), tc->width()});
    std::copy(xe_n.data(), xe_n.data() + xe_n.numel(), input.data());
    NodePtr y = model::generator_forward(make_const(std::move(input)), g);
    DenseTensor plane({tc->height(), tc->width()});
    std::copy(y->value.data(), y->value.data() + y->value.numel(), plane.data());
    // Raw intensity units via the input state; for TI normalization this is
    // the exact inverse of the pre-contrast standardization.
    const DenseTensor raw = prep::invert_norm(plane, cn.input_state);
    const std::string file = tc->case_id + "_gen.bin";
    io::write_tensor(out_dir / file, raw);
    entries.push_back(json{{"id", tc->case_id},
                           {"file", file},
                           {"norm_state", json::parse(prep::norm_state_to_json(cn.input_state))}});
    result.case_ids.push_back(tc->case_id);
  }
  manifest["cases"] = entries;
  std::ofstream f(out_dir / "gen_manifest.json", std::ios::trunc);
  f << manifest.dump(2) << "\n";
  return result;
}

}  // namespace timr::train
