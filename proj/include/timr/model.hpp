#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "timr/autodiff.hpp"

namespace timr::model {

// Miniature pixel-attention generator. Defaults keep CPU training fast; the
// channel widths are configurable up to the full-size values.
struct GeneratorConfig {
  int n_scpa_blocks = 4;
  int channels_down = 16;
  int channels_up = 16;
  float leaky_slope = 0.2f;

  void validate() const;
};

// Pixelwise (1x1 receptive field) conditional discriminator.
struct DiscriminatorConfig {
  std::vector<int> widths = {64, 128};

  void validate() const;
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  bool zero_init = false;   // biases and the generator head
  int fan_in = 0;           // 0 for zero-initialized entries
};

struct ParamStore {
  struct Item {
    std::string name;
    NodePtr node;
  };
  std::vector<Item> items;

  NodePtr find(const std::string& name) const;
  int64_t total_params() const;
};

struct GeneratorParams {
  GeneratorConfig cfg;
  ParamStore store;
};

struct DiscriminatorParams {
  DiscriminatorConfig cfg;
  ParamStore store;
};

std::vector<ParamSpec> generator_param_specs(const GeneratorConfig& cfg);
std::vector<ParamSpec> discriminator_param_specs(const DiscriminatorConfig& cfg);
int64_t generator_param_count(const GeneratorConfig& cfg);
int64_t discriminator_param_count(const DiscriminatorConfig& cfg);

// Kaiming fan-in normal kernels, zero biases, deterministic per seed. With
// zero_head (the default) the final convolution starts at zero so the
// generator begins as the identity map.
GeneratorParams init_generator(const GeneratorConfig& cfg, uint64_t seed,
                               bool zero_head = true);
DiscriminatorParams init_discriminator(const DiscriminatorConfig& cfg, uint64_t seed);

// Rebinds a parameter set onto externally created leaves (canonical spec
// order); used by the finite-difference checks.
GeneratorParams generator_from_leaves(const GeneratorConfig& cfg,
                                      std::vector<NodePtr> leaves);
DiscriminatorParams discriminator_from_leaves(const DiscriminatorConfig& cfg,
                                              std::vector<NodePtr> leaves);

NodePtr generator_forward(const NodePtr& x_early, const GeneratorParams& p);
NodePtr discriminator_forward(const NodePtr& x_early, const NodePtr& y,
                              const DiscriminatorParams& p);

// Checkpoint directory: one TIMR tensor file per parameter plus index.json
// carrying names, shapes, the step counter and a config echo.
void save_params(const std::filesystem::path& dir, const ParamStore& store,
                 const std::string& config_echo_json, int64_t step);
struct LoadedParams {
  ParamStore store;
  std::string config_echo_json;
  int64_t step = 0;
};
LoadedParams load_params(const std::filesystem::path& dir);

}  // namespace timr::model
