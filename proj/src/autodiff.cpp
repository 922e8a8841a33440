#include "timr/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "timr/kernels.hpp"

namespace timr {

namespace {

using kern::active_kernels;

NodePtr make_op(DenseTensor value, std::vector<NodePtr> parents,
                std::function<void(AutoNode&)> backprop, const char* op) {
  auto n = std::make_shared<AutoNode>();
  n->value = std::move(value);
  n->op = op;
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  n->requires_grad = req;
  if (req) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a->value.shape_str() + " vs " +
                                b->value.shape_str());
}

void check_image(const NodePtr& a, const char* op) {
  if (a->value.ndim() != 4)
    throw std::invalid_argument(std::string(op) + ": expected 4-d [B,C,H,W], got " +
                                a->value.shape_str());
}

// p.grad += contrib. ensure_grad must complete before its buffer is read.
void accum_grad(AutoNode& p, const DenseTensor& contrib) {
  DenseTensor& g = ensure_grad(p);
  active_kernels().add(g.data(), g.data(), contrib.data(), contrib.numel());
}

}  // namespace

NodePtr make_leaf(DenseTensor value, bool requires_grad) {
  auto n = std::make_shared<AutoNode>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

NodePtr make_const(DenseTensor value) { return make_leaf(std::move(value), false); }

DenseTensor& ensure_grad(AutoNode& n) {
  if (!n.grad_ready) {
    if (n.grad.same_shape(n.value))
      n.grad.fill(0.0f);
    else
      n.grad = DenseTensor(n.value.shape());
    n.grad_ready = true;
  }
  return n.grad;
}

void backward(const NodePtr& loss) {
  if (!loss) throw std::invalid_argument("backward: null root");
  if (loss->value.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                loss->value.shape_str());

  // Iterative post-order DFS over parent edges.
  std::vector<AutoNode*> topo;
  std::unordered_set<AutoNode*> visited;
  struct Frame {
    AutoNode* node;
    size_t next;
  };
  std::vector<Frame> stack;
  if (visited.insert(loss.get()).second) stack.push_back({loss.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      AutoNode* p = f.node->parents[f.next++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  for (AutoNode* n : topo) n->grad_ready = false;
  ensure_grad(*loss)[0] = 1.0f;

  // Reverse post-order: every consumer runs before its producers.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    AutoNode* n = *it;
    if (n->backprop && n->grad_ready && n->requires_grad) n->backprop(*n);
  }
}

namespace ops {

namespace {

// dX of a convolution equals a stride-1 convolution of the zero-dilated,
// zero-embedded output gradient with the spatially flipped, channel-swapped
// kernel. Routing it through conv2d_forward keeps one hot loop and one
// accumulation order.
DenseTensor conv2d_input_grad(const DenseTensor& d_out, const DenseTensor& kernel,
                              const kern::Conv2dDims& d) {
  const int buf_h = d.in_h + d.k_h - 1;
  const int buf_w = d.in_w + d.k_w - 1;
  DenseTensor buf({d.batch, d.cout, buf_h, buf_w});
  const int off_h = d.k_h - 1 - d.pad;
  const int off_w = d.k_w - 1 - d.pad;
  for (int b = 0; b < d.batch; ++b)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < d.out_h; ++oh) {
        const int u = oh * d.stride + off_h;
        if (u < 0 || u >= buf_h) continue;
        for (int ow = 0; ow < d.out_w; ++ow) {
          const int v = ow * d.stride + off_w;
          if (v < 0 || v >= buf_w) continue;
          buf.at(b, co, u, v) = d_out.at(b, co, oh, ow);
        }
      }

  DenseTensor flipped({d.cin, d.cout, d.k_h, d.k_w});
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int kh = 0; kh < d.k_h; ++kh)
        for (int kw = 0; kw < d.k_w; ++kw)
          flipped.at(ci, co, kh, kw) =
              kernel.at(co, ci, d.k_h - 1 - kh, d.k_w - 1 - kw);

  const auto gd = kern::make_conv2d_dims(d.batch, d.cout, buf_h, buf_w, d.cin,
                                         d.k_h, d.k_w, 1, 0);
  DenseTensor dx({d.batch, d.cin, d.in_h, d.in_w});
  active_kernels().conv2d_forward(dx.data(), buf.data(), flipped.data(), gd);
  return dx;
}

}  // namespace

NodePtr conv2d(const NodePtr& input, const NodePtr& kernel, int stride, int pad) {
  check_image(input, "conv2d");
  if (kernel->value.ndim() != 4)
    throw std::invalid_argument("conv2d: kernel must be [Cout,Cin,kh,kw], got " +
                                kernel->value.shape_str());
  if (kernel->value.dim(1) != input->value.dim(1))
    throw std::invalid_argument(
        "conv2d: input channels " + std::to_string(input->value.dim(1)) +
        " do not match kernel channels " + std::to_string(kernel->value.dim(1)));
  const auto d = kern::make_conv2d_dims(
      input->value.dim(0), input->value.dim(1), input->value.dim(2),
      input->value.dim(3), kernel->value.dim(0), kernel->value.dim(2),
      kernel->value.dim(3), stride, pad);

  DenseTensor out({d.batch, d.cout, d.out_h, d.out_w});
  active_kernels().conv2d_forward(out.data(), input->value.data(),
                                  kernel->value.data(), d);
  auto back = [d](AutoNode& n) {
    const NodePtr& in = n.parents[0];
    const NodePtr& ker = n.parents[1];
    if (in->requires_grad) {
      DenseTensor dx = conv2d_input_grad(n.grad, ker->value, d);
      accum_grad(*in, dx);
    }
    if (ker->requires_grad) {
      DenseTensor dk(ker->value.shape());
      active_kernels().conv2d_grad_kernel(dk.data(), in->value.data(),
                                          n.grad.data(), d);
      accum_grad(*ker, dk);
    }
  };
  return make_op(std::move(out), {input, kernel}, back, "conv2d");
}

NodePtr bias_add(const NodePtr& x, const NodePtr& bias) {
  check_image(x, "bias_add");
  if (bias->value.ndim() != 1 || bias->value.dim(0) != x->value.dim(1))
    throw std::invalid_argument("bias_add: bias shape " + bias->value.shape_str() +
                                " does not match channels of " + x->value.shape_str());
  const int B = x->value.dim(0), C = x->value.dim(1);
  const int64_t plane = int64_t(x->value.dim(2)) * x->value.dim(3);
  DenseTensor out(x->value.shape());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const float* src = x->value.data() + (int64_t(b) * C + c) * plane;
      float* dst = out.data() + (int64_t(b) * C + c) * plane;
      const float bv = bias->value[c];
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + bv;
    }
  auto back = [B, C, plane](AutoNode& n) {
    const NodePtr& x_ = n.parents[0];
    const NodePtr& b_ = n.parents[1];
    if (x_->requires_grad) accum_grad(*x_, n.grad);
    if (b_->requires_grad) {
      DenseTensor& db = ensure_grad(*b_);
      for (int c = 0; c < C; ++c) {
        double acc = db[c];
        for (int b = 0; b < B; ++b) {
          const float* g = n.grad.data() + (int64_t(b) * C + c) * plane;
          for (int64_t i = 0; i < plane; ++i) acc += double(g[i]);
        }
        db[c] = float(acc);
      }
    }
  };
  return make_op(std::move(out), {x, bias}, back, "bias_add");
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "add");
  DenseTensor out(a->value.shape());
  active_kernels().add(out.data(), a->value.data(), b->value.data(), out.numel());
  auto back = [](AutoNode& n) {
    for (int i = 0; i < 2; ++i) {
      const NodePtr& p = n.parents[size_t(i)];
      if (p->requires_grad) accum_grad(*p, n.grad);
    }
  };
  return make_op(std::move(out), {a, b}, back, "add");
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "sub");
  DenseTensor out(a->value.shape());
  active_kernels().sub(out.data(), a->value.data(), b->value.data(), out.numel());
  auto back = [](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    const NodePtr& b_ = n.parents[1];
    if (a_->requires_grad) accum_grad(*a_, n.grad);
    if (b_->requires_grad)
      active_kernels().axpy_acc(ensure_grad(*b_).data(), n.grad.data(), -1.0f,
                                n.grad.numel());
  };
  return make_op(std::move(out), {a, b}, back, "sub");
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  check_same_shape(a, b, "mul");
  DenseTensor out(a->value.shape());
  active_kernels().mul(out.data(), a->value.data(), b->value.data(), out.numel());
  auto back = [](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    const NodePtr& b_ = n.parents[1];
    if (a_->requires_grad)
      active_kernels().fma_acc(ensure_grad(*a_).data(), n.grad.data(),
                               b_->value.data(), n.grad.numel());
    if (b_->requires_grad)
      active_kernels().fma_acc(ensure_grad(*b_).data(), n.grad.data(),
                               a_->value.data(), n.grad.numel());
  };
  return make_op(std::move(out), {a, b}, back, "mul");
}

NodePtr scale(const NodePtr& a, float s) {
  DenseTensor out(a->value.shape());
  active_kernels().scale(out.data(), a->value.data(), s, out.numel());
  auto back = [s](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (a_->requires_grad)
      active_kernels().axpy_acc(ensure_grad(*a_).data(), n.grad.data(), s,
                                n.grad.numel());
  };
  return make_op(std::move(out), {a}, back, "scale");
}

NodePtr abs_val(const NodePtr& a) {
  DenseTensor out(a->value.shape());
  active_kernels().abs_val(out.data(), a->value.data(), out.numel());
  auto back = [](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    const float* x = a_->value.data();
    const float* g = n.grad.data();
    // sign(0) = 0 by convention.
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      da[i] = std::fma(g[i], x[i] > 0.0f ? 1.0f : (x[i] < 0.0f ? -1.0f : 0.0f),
                       da[i]);
  };
  return make_op(std::move(out), {a}, back, "abs");
}

NodePtr leaky_relu(const NodePtr& a, float slope) {
  DenseTensor out(a->value.shape());
  active_kernels().leaky_relu_fwd(out.data(), a->value.data(), slope, out.numel());
  auto back = [slope](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (a_->requires_grad)
      active_kernels().leaky_relu_bwd_acc(ensure_grad(*a_).data(), n.grad.data(),
                                          a_->value.data(), slope,
                                          n.grad.numel());
  };
  return make_op(std::move(out), {a}, back, "leaky_relu");
}

NodePtr sigmoid(const NodePtr& a) {
  DenseTensor out(a->value.shape());
  const float* x = a->value.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double v = double(x[i]);
    out[i] = float(v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                            : std::exp(v) / (1.0 + std::exp(v)));
  }
  auto back = [](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    const float* y = n.value.data();
    const float* g = n.grad.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      da[i] = std::fma(g[i], y[i] * (1.0f - y[i]), da[i]);
  };
  return make_op(std::move(out), {a}, back, "sigmoid");
}

NodePtr huber(const NodePtr& a, float delta) {
  if (!(delta > 0.0f)) throw std::invalid_argument("huber: delta must be > 0");
  DenseTensor out(a->value.shape());
  const float* x = a->value.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    const float v = std::fabs(x[i]);
    out[i] = v <= delta ? 0.5f * x[i] * x[i] : delta * (v - 0.5f * delta);
  }
  auto back = [delta](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    const float* x = a_->value.data();
    const float* g = n.grad.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i) {
      const float w = x[i] > delta ? delta : (x[i] < -delta ? -delta : x[i]);
      da[i] = std::fma(g[i], w, da[i]);
    }
  };
  return make_op(std::move(out), {a}, back, "huber");
}

NodePtr mean_all(const NodePtr& a) {
  double acc = 0.0;
  const float* x = a->value.data();
  const int64_t n_el = a->value.numel();
  for (int64_t i = 0; i < n_el; ++i) acc += double(x[i]);
  DenseTensor out({1}, {float(acc / double(n_el))});
  auto back = [n_el](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    const float g = n.grad[0] / float(n_el);
    for (int64_t i = 0; i < n_el; ++i) da[i] += g;
  };
  return make_op(std::move(out), {a}, back, "mean");
}

NodePtr sum_all(const NodePtr& a) {
  double acc = 0.0;
  const float* x = a->value.data();
  const int64_t n_el = a->value.numel();
  for (int64_t i = 0; i < n_el; ++i) acc += double(x[i]);
  DenseTensor out({1}, {float(acc)});
  auto back = [n_el](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    const float g = n.grad[0];
    for (int64_t i = 0; i < n_el; ++i) da[i] += g;
  };
  return make_op(std::move(out), {a}, back, "sum");
}

NodePtr upsample_nearest2(const NodePtr& a) {
  check_image(a, "upsample_nearest2");
  const int B = a->value.dim(0), C = a->value.dim(1);
  const int H = a->value.dim(2), W = a->value.dim(3);
  DenseTensor out({B, C, 2 * H, 2 * W});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const float v = a->value.at(b, c, y, x);
          out.at(b, c, 2 * y, 2 * x) = v;
          out.at(b, c, 2 * y, 2 * x + 1) = v;
          out.at(b, c, 2 * y + 1, 2 * x) = v;
          out.at(b, c, 2 * y + 1, 2 * x + 1) = v;
        }
  auto back = [B, C, H, W](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x)
            da.at(b, c, y, x) += ((n.grad.at(b, c, 2 * y, 2 * x) +
                                   n.grad.at(b, c, 2 * y, 2 * x + 1)) +
                                  (n.grad.at(b, c, 2 * y + 1, 2 * x) +
                                   n.grad.at(b, c, 2 * y + 1, 2 * x + 1)));
  };
  return make_op(std::move(out), {a}, back, "upsample_nearest2");
}

namespace {

struct LerpCoef {
  int i0, i1;
  float f;  // weight of i1
};

// Half-pixel sample positions with edge clamping. Exact identity when the
// extent is unchanged.
std::vector<LerpCoef> lerp_coefs(int in_n, int out_n) {
  std::vector<LerpCoef> cs(static_cast<size_t>(out_n), LerpCoef{});
  const double scale = double(in_n) / double(out_n);
  for (int o = 0; o < out_n; ++o) {
    double pos = (double(o) + 0.5) * scale - 0.5;
    if (pos < 0.0) pos = 0.0;
    if (pos > double(in_n - 1)) pos = double(in_n - 1);
    int i0 = int(std::floor(pos));
    if (i0 > in_n - 1) i0 = in_n - 1;
    const double f = pos - double(i0);
    cs[size_t(o)] = {i0, i0 + 1 <= in_n - 1 ? i0 + 1 : i0, float(f)};
  }
  return cs;
}

}  // namespace

NodePtr bilinear_resize(const NodePtr& a, int out_h, int out_w) {
  check_image(a, "bilinear_resize");
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_resize: output extents must be >= 1");
  const int B = a->value.dim(0), C = a->value.dim(1);
  const int H = a->value.dim(2), W = a->value.dim(3);
  const auto ys = lerp_coefs(H, out_h);
  const auto xs = lerp_coefs(W, out_w);
  DenseTensor out({B, C, out_h, out_w});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < out_h; ++oy) {
        const LerpCoef& cy = ys[size_t(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const LerpCoef& cx = xs[size_t(ox)];
          if (cy.f == 0.0f && cx.f == 0.0f) {
            out.at(b, c, oy, ox) = a->value.at(b, c, cy.i0, cx.i0);
            continue;
          }
          const float top = (1.0f - cx.f) * a->value.at(b, c, cy.i0, cx.i0) +
                            cx.f * a->value.at(b, c, cy.i0, cx.i1);
          const float bot = (1.0f - cx.f) * a->value.at(b, c, cy.i1, cx.i0) +
                            cx.f * a->value.at(b, c, cy.i1, cx.i1);
          out.at(b, c, oy, ox) = (1.0f - cy.f) * top + cy.f * bot;
        }
      }
  auto back = [B, C, out_h, out_w, ys, xs](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < out_h; ++oy) {
          const LerpCoef& cy = ys[size_t(oy)];
          for (int ox = 0; ox < out_w; ++ox) {
            const LerpCoef& cx = xs[size_t(ox)];
            const float g = n.grad.at(b, c, oy, ox);
            da.at(b, c, cy.i0, cx.i0) += (1.0f - cy.f) * (1.0f - cx.f) * g;
            da.at(b, c, cy.i0, cx.i1) += (1.0f - cy.f) * cx.f * g;
            da.at(b, c, cy.i1, cx.i0) += cy.f * (1.0f - cx.f) * g;
            da.at(b, c, cy.i1, cx.i1) += cy.f * cx.f * g;
          }
        }
  };
  return make_op(std::move(out), {a}, back, "bilinear_resize");
}

NodePtr instance_norm(const NodePtr& a, float eps) {
  check_image(a, "instance_norm");
  const int B = a->value.dim(0), C = a->value.dim(1);
  const int64_t plane = int64_t(a->value.dim(2)) * a->value.dim(3);
  DenseTensor out(a->value.shape());
  std::vector<float> inv_sd(size_t(B) * C);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const float* x = a->value.data() + (int64_t(b) * C + c) * plane;
      double mean = 0.0;
      for (int64_t i = 0; i < plane; ++i) mean += double(x[i]);
      mean /= double(plane);
      double var = 0.0;
      for (int64_t i = 0; i < plane; ++i) {
        const double dv = double(x[i]) - mean;
        var += dv * dv;
      }
      var /= double(plane);
      const float m = float(mean);
      const float inv = float(1.0 / std::sqrt(var + double(eps)));
      inv_sd[size_t(b) * C + c] = inv;
      float* y = out.data() + (int64_t(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) y[i] = (x[i] - m) * inv;
    }
  auto back = [B, C, plane, inv_sd](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const int64_t off = (int64_t(b) * C + c) * plane;
        const float* y = n.value.data() + off;
        const float* g = n.grad.data() + off;
        double g_mean = 0.0, gy_mean = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
          g_mean += double(g[i]);
          gy_mean += double(g[i]) * double(y[i]);
        }
        g_mean /= double(plane);
        gy_mean /= double(plane);
        const float inv = inv_sd[size_t(b) * C + c];
        const float gm = float(g_mean), gym = float(gy_mean);
        float* d = da.data() + off;
        for (int64_t i = 0; i < plane; ++i)
          d[i] += inv * (g[i] - gm - y[i] * gym);
      }
  };
  return make_op(std::move(out), {a}, back, "instance_norm");
}

NodePtr concat_ch(const NodePtr& a, const NodePtr& b) {
  check_image(a, "concat_ch");
  check_image(b, "concat_ch");
  if (a->value.dim(0) != b->value.dim(0) || a->value.dim(2) != b->value.dim(2) ||
      a->value.dim(3) != b->value.dim(3))
    throw std::invalid_argument("concat_ch: incompatible shapes " +
                                a->value.shape_str() + " vs " + b->value.shape_str());
  const int B = a->value.dim(0);
  const int Ca = a->value.dim(1), Cb = b->value.dim(1);
  const int64_t plane = int64_t(a->value.dim(2)) * a->value.dim(3);
  DenseTensor out({B, Ca + Cb, a->value.dim(2), a->value.dim(3)});
  for (int bb = 0; bb < B; ++bb) {
    float* dst = out.data() + int64_t(bb) * (Ca + Cb) * plane;
    const float* pa = a->value.data() + int64_t(bb) * Ca * plane;
    const float* pb = b->value.data() + int64_t(bb) * Cb * plane;
    std::copy(pa, pa + Ca * plane, dst);
    std::copy(pb, pb + Cb * plane, dst + Ca * plane);
  }
  auto back = [B, Ca, Cb, plane](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    const NodePtr& b_ = n.parents[1];
    for (int bb = 0; bb < B; ++bb) {
      const float* g = n.grad.data() + int64_t(bb) * (Ca + Cb) * plane;
      if (a_->requires_grad) {
        float* da = ensure_grad(*a_).data() + int64_t(bb) * Ca * plane;
        active_kernels().add(da, da, g, Ca * plane);
      }
      if (b_->requires_grad) {
        float* db = ensure_grad(*b_).data() + int64_t(bb) * Cb * plane;
        active_kernels().add(db, db, g + Ca * plane, Cb * plane);
      }
    }
  };
  return make_op(std::move(out), {a, b}, back, "concat_ch");
}

NodePtr slice_ch(const NodePtr& a, int c0, int c1) {
  check_image(a, "slice_ch");
  const int C = a->value.dim(1);
  if (c0 < 0 || c1 <= c0 || c1 > C)
    throw std::invalid_argument("slice_ch: invalid channel range [" +
                                std::to_string(c0) + "," + std::to_string(c1) +
                                ") for " + a->value.shape_str());
  const int B = a->value.dim(0);
  const int64_t plane = int64_t(a->value.dim(2)) * a->value.dim(3);
  const int Cs = c1 - c0;
  DenseTensor out({B, Cs, a->value.dim(2), a->value.dim(3)});
  for (int bb = 0; bb < B; ++bb) {
    const float* src = a->value.data() + (int64_t(bb) * C + c0) * plane;
    std::copy(src, src + Cs * plane, out.data() + int64_t(bb) * Cs * plane);
  }
  auto back = [B, C, c0, Cs, plane](AutoNode& n) {
    const NodePtr& a_ = n.parents[0];
    if (!a_->requires_grad) return;
    DenseTensor& da = ensure_grad(*a_);
    for (int bb = 0; bb < B; ++bb) {
      float* d = da.data() + (int64_t(bb) * C + c0) * plane;
      const float* g = n.grad.data() + int64_t(bb) * Cs * plane;
      active_kernels().add(d, d, g, Cs * plane);
    }
  };
  return make_op(std::move(out), {a}, back, "slice_ch");
}

NodePtr bce_with_logits_mean(const NodePtr& logits, float target) {
  const int64_t n_el = logits->value.numel();
  const float* l = logits->value.data();
  double acc = 0.0;
  for (int64_t i = 0; i < n_el; ++i) {
    const double v = double(l[i]);
    acc += std::max(v, 0.0) - v * double(target) + std::log1p(std::exp(-std::fabs(v)));
  }
  DenseTensor out({1}, {float(acc / double(n_el))});
  auto back = [n_el, target](AutoNode& n) {
    const NodePtr& l_ = n.parents[0];
    if (!l_->requires_grad) return;
    DenseTensor& dl = ensure_grad(*l_);
    const float g = n.grad[0] / float(n_el);
    const float* lv = l_->value.data();
    for (int64_t i = 0; i < n_el; ++i) {
      const double v = double(lv[i]);
      const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                  : std::exp(v) / (1.0 + std::exp(v));
      dl[i] += g * float(sig - double(target));
    }
  };
  return make_op(std::move(out), {logits}, back, "bce_with_logits");
}

NodePtr detach(const NodePtr& a) { return make_const(a->value); }

}  // namespace ops
}  // namespace timr
