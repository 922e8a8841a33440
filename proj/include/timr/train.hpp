#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "timr/losses.hpp"
#include "timr/model.hpp"
#include "timr/phantom.hpp"
#include "timr/prep.hpp"

namespace timr::train {

struct TrainConfig {
  losses::Variant variant = losses::Variant::TIPAN;
  prep::NormMethod norm_method = prep::NormMethod::TINorm;
  int epochs = 30;
  int batch_size = 4;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  losses::LossWeights weights;
  uint64_t seed = 1234;
  int checkpoint_every = 10;  // epochs; 0 disables periodic checkpoints
  model::GeneratorConfig gen;
  model::DiscriminatorConfig disc;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& s);
};

struct OptimizerState {
  std::vector<DenseTensor> m, v;
  int64_t step = 0;

  static OptimizerState for_store(const model::ParamStore& store);
};

// Bias-corrected adaptive-moment update over every parameter's current
// gradient. Throws on non-finite gradients (divergence guard).
void adam_step(model::ParamStore& params, OptimizerState& state, double lr,
               double beta1, double beta2, double eps);

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;  // contains generator/ and discriminator/
  std::filesystem::path log_path;
  int64_t steps = 0;
};

// Alternating one-discriminator / one-generator step per batch; fully
// reproducible from (dataset, config). Writes config echo, a CSV step log
// (step,d_loss,g_adv,l_i,l_ti,g_total) and periodic + final checkpoints under
// run_dir. On divergence the last written checkpoint is retained and a
// runtime_error is thrown.
TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& cfg,
                  const std::filesystem::path& run_dir);

struct SynthResult {
  std::filesystem::path dir;
  std::vector<std::string> case_ids;
};

// Normalizes each case's early plane per the checkpoint's method, runs the
// generator, inverse-maps to raw intensity units and writes one TIMR plane
// per case plus gen_manifest.json.
SynthResult synthesize(const std::filesystem::path& checkpoint_dir,
                       const std::filesystem::path& dataset_dir,
                       const std::string& split,
                       const std::filesystem::path& out_dir);

// Per-method normalization choice for one case: the generator input is the
// early plane under `input_state`; the training target is the late plane
// under its own per-image state for Min-Max / Z-score (this is exactly what
// distorts the kinetics) and under the shared pre-contrast state for TI.
struct CaseNorm {
  prep::NormState input_state;
  prep::NormState target_state;
};
CaseNorm case_norm(const phantom::CaseTriplet& tc, prep::NormMethod method);

}  // namespace timr::train
