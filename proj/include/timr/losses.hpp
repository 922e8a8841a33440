#pragma once

#include <string>
#include <utility>

#include "timr/autodiff.hpp"

namespace timr::losses {

struct LossWeights {
  float lambda_i = 100.0f;   // pixel L1 term
  float lambda_ti = 100.0f;  // enhancement (CE or Huber) term
  float delta = 1.0f;        // Huber threshold

  void validate() const;
};

// Model variants: PAN is the adversarial + pixel-L1 baseline, CE-PAN adds the
// L1 enhancement-map loss, TI-PAN the Huber enhancement-map loss.
enum class Variant { PAN, CEPAN, TIPAN };
const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Per-pixel contrast-enhancement maps |y - x_e| for the real and generated
// late responses.
std::pair<NodePtr, NodePtr> ce_maps(const NodePtr& x_early, const NodePtr& y_late,
                                    const NodePtr& y_gen);

NodePtr ce_loss(const NodePtr& ce_real, const NodePtr& ce_gen);
NodePtr ti_loss(const NodePtr& ce_real, const NodePtr& ce_gen, float delta);

// Sigmoid cross-entropy on discriminator logits, averaged over pixels and
// batch: d_loss = (BCE(real,1) + BCE(fake,0)) / 2. The generator uses the
// non-saturating form BCE(fake,1).
std::pair<NodePtr, NodePtr> gan_losses(const NodePtr& d_real_logits,
                                       const NodePtr& d_fake_logits);
NodePtr g_adv_loss(const NodePtr& d_fake_logits);

struct GeneratorObjective {
  NodePtr total;        // adv + lambda_i * pixel + lambda_ti * enhancement
  NodePtr adv;
  NodePtr pixel;        // mean |y_gen - y_late|
  NodePtr enhancement;  // variant-dependent; zero constant for PAN
};

GeneratorObjective generator_objective(const NodePtr& x_early, const NodePtr& y_late,
                                       const NodePtr& y_gen,
                                       const NodePtr& d_fake_logits,
                                       const LossWeights& w, Variant variant);

}  // namespace timr::losses
