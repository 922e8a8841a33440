#include "timr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace timr::losses {

using namespace timr::ops;

void LossWeights::validate() const {
  if (!(lambda_i >= 0.0f) || !std::isfinite(lambda_i))
    throw std::invalid_argument("losses: lambda_i must be finite and >= 0");
  if (!(lambda_ti >= 0.0f) || !std::isfinite(lambda_ti))
    throw std::invalid_argument("losses: lambda_ti must be finite and >= 0");
  if (!(delta > 0.0f) || !std::isfinite(delta))
    throw std::invalid_argument("losses: delta must be finite and > 0");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::PAN: return "pan";
    case Variant::CEPAN: return "ce-pan";
    case Variant::TIPAN: return "ti-pan";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "pan") return Variant::PAN;
  if (name == "ce-pan") return Variant::CEPAN;
  if (name == "ti-pan") return Variant::TIPAN;
  throw std::invalid_argument("unknown model variant: " + name);
}

std::pair<NodePtr, NodePtr> ce_maps(const NodePtr& x_early, const NodePtr& y_late,
                                    const NodePtr& y_gen) {
  return {abs_val(sub(y_late, x_early)), abs_val(sub(y_gen, x_early))};
}

NodePtr ce_loss(const NodePtr& ce_real, const NodePtr& ce_gen) {
  return mean_all(abs_val(sub(ce_real, ce_gen)));
}

NodePtr ti_loss(const NodePtr& ce_real, const NodePtr& ce_gen, float delta) {
  return mean_all(huber(sub(ce_real, ce_gen), delta));
}

std::pair<NodePtr, NodePtr> gan_losses(const NodePtr& d_real_logits,
                                       const NodePtr& d_fake_logits) {
  NodePtr d_loss = scale(add(bce_with_logits_mean(d_real_logits, 1.0f),
                             bce_with_logits_mean(d_fake_logits, 0.0f)),
                         0.5f);
  return {d_loss, g_adv_loss(d_fake_logits)};
}

NodePtr g_adv_loss(const NodePtr& d_fake_logits) {
  return bce_with_logits_mean(d_fake_logits, 1.0f);
}

GeneratorObjective generator_objective(const NodePtr& x_early, const NodePtr& y_late,
                                       const NodePtr& y_gen,
                                       const NodePtr& d_fake_logits,
                                       const LossWeights& w, Variant variant) {
  w.validate();
  GeneratorObjective obj;
  obj.adv = g_adv_loss(d_fake_logits);
  obj.pixel = mean_all(abs_val(sub(y_gen, y_late)));
  switch (variant) {
    case Variant::PAN:
      obj.enhancement = make_const(DenseTensor::scalar(0.0f));
      break;
    case Variant::CEPAN: {
      auto [ce_r, ce_g] = ce_maps(x_early, y_late, y_gen);
      obj.enhancement = ce_loss(ce_r, ce_g);
      break;
    }
    case Variant::TIPAN: {
      auto [ce_r, ce_g] = ce_maps(x_early, y_late, y_gen);
      obj.enhancement = ti_loss(ce_r, ce_g, w.delta);
      break;
    }
  }
  const float lambda_ti_eff = variant == Variant::PAN ? 0.0f : w.lambda_ti;
  obj.total = add(obj.adv, add(scale(obj.pixel, w.lambda_i),
                               scale(obj.enhancement, lambda_ti_eff)));
  return obj;
}

}  // namespace timr::losses
