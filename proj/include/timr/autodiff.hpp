#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "timr/tensor.hpp"

// Reverse-mode automatic differentiation over DenseTensor. Graphs are built
// functionally: every op returns a fresh node holding its value, parent links
// and a pull-style backprop closure. Graph construction and backward are
// single-threaded per graph; nodes are not shared across threads.
//
// All scalar reductions (mean, sum, statistics) accumulate in double over
// row-major order and round once to f32 at the end.

namespace timr {

struct AutoNode;
using NodePtr = std::shared_ptr<AutoNode>;

struct AutoNode {
  DenseTensor value;
  DenseTensor grad;  // materialized lazily, zeroed at the start of each pass
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<NodePtr> parents;
  std::function<void(AutoNode&)> backprop;
  const char* op = "leaf";
};

NodePtr make_leaf(DenseTensor value, bool requires_grad);
NodePtr make_const(DenseTensor value);

// Zeroes reachable gradients, seeds the (scalar) root with 1 and runs the
// reverse pass. Idempotent per pass. Throws if the root is not scalar.
void backward(const NodePtr& loss);

// Materializes (zeroing if needed) the gradient buffer for this pass.
DenseTensor& ensure_grad(AutoNode& n);

namespace ops {

NodePtr conv2d(const NodePtr& input, const NodePtr& kernel, int stride, int pad);
NodePtr bias_add(const NodePtr& x, const NodePtr& bias);  // bias shape [C]
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, float s);
NodePtr abs_val(const NodePtr& a);
NodePtr leaky_relu(const NodePtr& a, float slope);
NodePtr sigmoid(const NodePtr& a);
NodePtr huber(const NodePtr& a, float delta);  // elementwise Huber
NodePtr mean_all(const NodePtr& a);            // scalar node
NodePtr sum_all(const NodePtr& a);             // scalar node
NodePtr upsample_nearest2(const NodePtr& a);
NodePtr bilinear_resize(const NodePtr& a, int out_h, int out_w);
NodePtr instance_norm(const NodePtr& a, float eps = 1e-5f);
NodePtr concat_ch(const NodePtr& a, const NodePtr& b);
NodePtr slice_ch(const NodePtr& a, int c0, int c1);
// Mean binary cross-entropy with logits against a constant target plane value.
NodePtr bce_with_logits_mean(const NodePtr& logits, float target);
NodePtr detach(const NodePtr& a);

}  // namespace ops
}  // namespace timr
