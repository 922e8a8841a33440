#include "timr/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "timr/io.hpp"
#include "timr/rng.hpp"

namespace timr::model {

using nlohmann::json;

void GeneratorConfig::validate() const {
  if (n_scpa_blocks < 1)
    throw std::invalid_argument("generator: n_scpa_blocks must be >= 1");
  if (channels_down < 2 || channels_down % 2 != 0)
    throw std::invalid_argument("generator: channels_down must be even and >= 2");
  if (channels_up < 2 || channels_up % 2 != 0)
    throw std::invalid_argument("generator: channels_up must be even and >= 2");
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f))
    throw std::invalid_argument("generator: leaky_slope must be in (0,1)");
}

void DiscriminatorConfig::validate() const {
  if (widths.empty()) throw std::invalid_argument("discriminator: widths empty");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("discriminator: widths must be >= 1");
}

NodePtr ParamStore::find(const std::string& name) const {
  for (const auto& it : items)
    if (it.name == name) return it.node;
  throw std::out_of_range("param not found: " + name);
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& it : items) n += it.node->value.numel();
  return n;
}

namespace {

void push_conv(std::vector<ParamSpec>& specs, const std::string& name, int cout,
               int cin, int kh, int kw, bool zero = false) {
  specs.push_back({name + ".w", {cout, cin, kh, kw}, zero, zero ? 0 : cin * kh * kw});
  specs.push_back({name + ".b", {cout}, true, 0});
}

ParamStore materialize(const std::vector<ParamSpec>& specs, uint64_t seed) {
  Rng rng(seed);
  ParamStore store;
  for (const auto& sp : specs) {
    DenseTensor t(sp.shape);
    if (!sp.zero_init) {
      const double sd = std::sqrt(2.0 / double(sp.fan_in));
      for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.normal(0.0, sd));
    }
    store.items.push_back({sp.name, make_leaf(std::move(t), true)});
  }
  return store;
}

ParamStore bind_params(const std::vector<ParamSpec>& specs, std::vector<NodePtr> leaves) {
  if (leaves.size() != specs.size())
    throw std::invalid_argument("param binding: expected " +
                                std::to_string(specs.size()) + " leaves, got " +
                                std::to_string(leaves.size()));
  ParamStore store;
  for (size_t i = 0; i < specs.size(); ++i) {
    if (leaves[i]->value.shape() != specs[i].shape)
      throw std::invalid_argument("param binding: shape mismatch for " + specs[i].name);
    store.items.push_back({specs[i].name, std::move(leaves[i])});
  }
  return store;
}

}  // namespace

std::vector<ParamSpec> generator_param_specs(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  const int cd = cfg.channels_down;
  const int half = cd / 2;
  push_conv(specs, "stem", cd, 1, 3, 3);
  push_conv(specs, "down", cd, cd, 3, 3);
  for (int i = 0; i < cfg.n_scpa_blocks; ++i) {
    const std::string b = "block" + std::to_string(i);
    push_conv(specs, b + ".in", cd, cd, 1, 1);
    push_conv(specs, b + ".attn", half, half, 1, 1);
    push_conv(specs, b + ".a", half, half, 3, 3);
    push_conv(specs, b + ".b", half, half, 3, 3);
    push_conv(specs, b + ".merge", cd, cd, 1, 1);
  }
  push_conv(specs, "upa.attn", cd, cd, 1, 1);
  push_conv(specs, "upa.conv", cfg.channels_up, cd, 3, 3);
  push_conv(specs, "head", 1, cfg.channels_up, 3, 3, /*zero=*/true);
  return specs;
}

std::vector<ParamSpec> discriminator_param_specs(const DiscriminatorConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  int cin = 2;
  for (size_t i = 0; i < cfg.widths.size(); ++i) {
    push_conv(specs, "d" + std::to_string(i), cfg.widths[i], cin, 1, 1);
    cin = cfg.widths[i];
  }
  push_conv(specs, "d" + std::to_string(cfg.widths.size()), 1, cin, 1, 1);
  return specs;
}

namespace {

int64_t count_params(const std::vector<ParamSpec>& specs) {
  int64_t n = 0;
  for (const auto& sp : specs) n += shape_numel(sp.shape);
  return n;
}

}  // namespace

int64_t generator_param_count(const GeneratorConfig& cfg) {
  return count_params(generator_param_specs(cfg));
}

int64_t discriminator_param_count(const DiscriminatorConfig& cfg) {
  return count_params(discriminator_param_specs(cfg));
}

GeneratorParams init_generator(const GeneratorConfig& cfg, uint64_t seed,
                               bool zero_head) {
  auto specs = generator_param_specs(cfg);
  if (!zero_head)
    for (auto& sp : specs)
      if (sp.name == "head.w") {
        sp.zero_init = false;
        sp.fan_in = cfg.channels_up * 9;
      }
  return {cfg, materialize(specs, seed)};
}

DiscriminatorParams init_discriminator(const DiscriminatorConfig& cfg, uint64_t seed) {
  return {cfg, materialize(discriminator_param_specs(cfg), seed)};
}

GeneratorParams generator_from_leaves(const GeneratorConfig& cfg,
                                      std::vector<NodePtr> leaves) {
  return {cfg, bind_params(generator_param_specs(cfg), std::move(leaves))};
}

DiscriminatorParams discriminator_from_leaves(const DiscriminatorConfig& cfg,
                                              std::vector<NodePtr> leaves) {
  return {cfg, bind_params(discriminator_param_specs(cfg), std::move(leaves))};
}

namespace {

using namespace timr::ops;

NodePtr conv_block(const NodePtr& x, const ParamStore& st, const std::string& name,
                   int stride, int pad) {
  return bias_add(conv2d(x, st.find(name + ".w"), stride, pad), st.find(name + ".b"));
}

// Self-calibrated pixel-attention block: a 1x1 projection splits the features
// into two half-width branches; branch A is gated by a sigmoid attention map
// before its 3x3 convolution, branch B is a plain 3x3 convolution. The merged
// result is projected back and added to the block input.
NodePtr scpa_block(const NodePtr& x, const GeneratorParams& p, int index) {
  const ParamStore& st = p.store;
  const std::string b = "block" + std::to_string(index);
  const int half = p.cfg.channels_down / 2;
  const float slope = p.cfg.leaky_slope;
  NodePtr t = conv_block(x, st, b + ".in", 1, 0);
  NodePtr ta = slice_ch(t, 0, half);
  NodePtr tb = slice_ch(t, half, 2 * half);
  NodePtr attn = sigmoid(conv_block(ta, st, b + ".attn", 1, 0));
  NodePtr a = leaky_relu(conv_block(mul(ta, attn), st, b + ".a", 1, 1), slope);
  NodePtr bb = leaky_relu(conv_block(tb, st, b + ".b", 1, 1), slope);
  NodePtr merged = conv_block(concat_ch(a, bb), st, b + ".merge", 1, 0);
  return add(merged, x);
}

}  // namespace

NodePtr generator_forward(const NodePtr& x_early, const GeneratorParams& p) {
  if (x_early->value.ndim() != 4 || x_early->value.dim(1) != 1)
    throw std::invalid_argument("generator: input must be [B,1,H,W], got " +
                                x_early->value.shape_str());
  const int H = x_early->value.dim(2), W = x_early->value.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("generator: spatial extents must be even, got " +
                                x_early->value.shape_str());
  const ParamStore& st = p.store;
  const float slope = p.cfg.leaky_slope;

  NodePtr h = leaky_relu(conv_block(x_early, st, "stem", 1, 1), slope);
  h = leaky_relu(conv_block(h, st, "down", 2, 1), slope);
  for (int i = 0; i < p.cfg.n_scpa_blocks; ++i) h = scpa_block(h, p, i);

  // U-PA reconstruction: nearest-neighbor x2, pixel attention, 3x3 conv.
  h = upsample_nearest2(h);
  NodePtr attn = sigmoid(conv_block(h, st, "upa.attn", 1, 0));
  h = leaky_relu(conv_block(mul(h, attn), st, "upa.conv", 1, 1), slope);

  NodePtr y = conv_block(h, st, "head", 1, 1);
  NodePtr skip = bilinear_resize(x_early, H, W);
  return add(y, skip);
}

NodePtr discriminator_forward(const NodePtr& x_early, const NodePtr& y,
                              const DiscriminatorParams& p) {
  if (!x_early->value.same_shape(y->value))
    throw std::invalid_argument("discriminator: condition/input shape mismatch " +
                                x_early->value.shape_str() + " vs " +
                                y->value.shape_str());
  const ParamStore& st = p.store;
  NodePtr h = concat_ch(x_early, y);
  h = leaky_relu(conv_block(h, st, "d0", 1, 0), 0.2f);
  for (size_t i = 1; i < p.cfg.widths.size(); ++i) {
    h = conv_block(h, st, "d" + std::to_string(i), 1, 0);
    h = leaky_relu(instance_norm(h), 0.2f);
  }
  return conv_block(h, st, "d" + std::to_string(p.cfg.widths.size()), 1, 0);
}

void save_params(const std::filesystem::path& dir, const ParamStore& store,
                 const std::string& config_echo_json, int64_t step) {
  std::filesystem::create_directories(dir);
  json index;
  index["format_version"] = 1;
  index["step"] = step;
  index["config"] = config_echo_json.empty() ? json(nullptr)
                                             : json::parse(config_echo_json);
  json params = json::array();
  for (size_t i = 0; i < store.items.size(); ++i) {
    char file[32];
    std::snprintf(file, sizeof file, "p%03zu.bin", i);
    io::write_tensor(dir / file, store.items[i].node->value);
    json entry;
    entry["name"] = store.items[i].name;
    entry["file"] = file;
    entry["shape"] = store.items[i].node->value.shape();
    params.push_back(entry);
  }
  index["params"] = params;
  std::ofstream f(dir / "index.json", std::ios::trunc);
  if (!f) throw io::IoError(io::ErrorKind::WriteFailed,
                            "cannot write checkpoint index in " + dir.string());
  f << index.dump(2) << "\n";
}

LoadedParams load_params(const std::filesystem::path& dir) {
  std::ifstream f(dir / "index.json");
  if (!f) throw io::IoError(io::ErrorKind::MissingFile,
                            "missing checkpoint index: " + (dir / "index.json").string());
  json index = json::parse(f, nullptr, /*allow_exceptions=*/true);
  LoadedParams out;
  out.step = index.at("step").get<int64_t>();
  if (!index.at("config").is_null()) out.config_echo_json = index["config"].dump();
  for (const auto& entry : index.at("params")) {
    DenseTensor t = io::read_tensor(dir / entry.at("file").get<std::string>());
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (t.shape() != shape)
      throw io::IoError(io::ErrorKind::BadHeader,
                        "checkpoint shape mismatch for " + entry.at("name").get<std::string>());
    out.store.items.push_back({entry.at("name").get<std::string>(),
                               make_leaf(std::move(t), true)});
  }
  return out;
}

}  // namespace timr::model
