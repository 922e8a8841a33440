#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "timr/autodiff.hpp"

// Finite-difference verification of analytic gradients. Each check carries
// two routes: the f32 autodiff graph under test, and an independent naive
// double-precision forward reimplementation used as the differencing oracle.
// Differencing in double keeps the oracle's roundoff far below the tolerance,
// so a failure means a real gradient bug rather than f32 cancellation noise.

namespace timr::gradcheck {

// Double-precision reference tensors for the oracle route.
struct DTensor {
  std::vector<int> shape;
  std::vector<double> v;

  DTensor() = default;
  explicit DTensor(const DenseTensor& t);
  DTensor(std::vector<int> s, std::vector<double> values)
      : shape(std::move(s)), v(std::move(values)) {}

  int dim(int i) const { return shape[size_t(i)]; }
  int64_t numel() const { return int64_t(v.size()); }
  double& at(int b, int c, int h, int w) {
    return v[size_t(((int64_t(b) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at(int b, int c, int h, int w) const {
    return v[size_t(((int64_t(b) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
};

// Naive forward-only references mirroring the autodiff op semantics.
namespace dref {
DTensor conv2d(const DTensor& x, const DTensor& k, int stride, int pad);
DTensor bias_add(const DTensor& x, const DTensor& b);
DTensor add(const DTensor& a, const DTensor& b);
DTensor sub(const DTensor& a, const DTensor& b);
DTensor mul(const DTensor& a, const DTensor& b);
DTensor scale(const DTensor& a, double s);
DTensor abs_val(const DTensor& a);
DTensor leaky_relu(const DTensor& a, double slope);
DTensor sigmoid(const DTensor& a);
DTensor huber(const DTensor& a, double delta);
double mean_all(const DTensor& a);
double sum_all(const DTensor& a);
DTensor upsample_nearest2(const DTensor& a);
DTensor bilinear_resize(const DTensor& a, int out_h, int out_w);
DTensor instance_norm(const DTensor& a, double eps = 1e-5);
DTensor concat_ch(const DTensor& a, const DTensor& b);
DTensor slice_ch(const DTensor& a, int c0, int c1);
double bce_with_logits_mean(const DTensor& l, double target);
}  // namespace dref

using LossFn = std::function<NodePtr(const std::vector<NodePtr>&)>;
using RefLossFn = std::function<double(const std::vector<DTensor>&)>;

struct CheckReport {
  std::string name;
  double max_rel_err = 0.0;
  int64_t n_entries = 0;
  bool pass = false;
};

// Compares analytic gradients of `loss` w.r.t. every input against central
// finite differences of `ref_loss`. Relative error per entry uses
// max(|analytic|, |fd|, rel_floor * max|analytic| over the input) as
// denominator.
CheckReport check(const std::string& name, const LossFn& loss,
                  const RefLossFn& ref_loss,
                  const std::vector<DenseTensor>& inputs, double step = 1e-3,
                  double tolerance = 1e-3, double rel_floor = 1e-3);

// The full battery: every differentiable op on >= 5 seeded inputs each, plus
// generator and discriminator parameter checks.
std::vector<CheckReport> standard_battery(uint64_t seed = 20240601);

}  // namespace timr::gradcheck
