#include "timr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "timr/model.hpp"
#include "timr/rng.hpp"

namespace timr::gradcheck {

DTensor::DTensor(const DenseTensor& t) : shape(t.shape()) {
  v.resize(size_t(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) v[size_t(i)] = double(t[i]);
}

namespace dref {

DTensor conv2d(const DTensor& x, const DTensor& k, int stride, int pad) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  DTensor y({B, Cout, Ho, Wo}, std::vector<double>(size_t(B) * Cout * Ho * Wo, 0.0));
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int a = 0; a < kh; ++a)
              for (int c = 0; c < kw; ++c) {
                const int ih = oh * stride - pad + a;
                const int iw = ow * stride - pad + c;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += k.at(co, ci, a, c) * x.at(b, ci, ih, iw);
              }
          y.at(b, co, oh, ow) = acc;
        }
  return y;
}

DTensor bias_add(const DTensor& x, const DTensor& b) {
  DTensor y = x;
  const int B = x.dim(0), C = x.dim(1);
  const int64_t plane = int64_t(x.dim(2)) * x.dim(3);
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int64_t i = 0; i < plane; ++i)
        y.v[size_t((int64_t(bb) * C + c) * plane + i)] += b.v[size_t(c)];
  return y;
}

DTensor add(const DTensor& a, const DTensor& b) {
  DTensor y = a;
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += b.v[i];
  return y;
}

DTensor sub(const DTensor& a, const DTensor& b) {
  DTensor y = a;
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] -= b.v[i];
  return y;
}

DTensor mul(const DTensor& a, const DTensor& b) {
  DTensor y = a;
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] *= b.v[i];
  return y;
}

DTensor scale(const DTensor& a, double s) {
  DTensor y = a;
  for (auto& x : y.v) x *= s;
  return y;
}

DTensor abs_val(const DTensor& a) {
  DTensor y = a;
  for (auto& x : y.v) x = std::fabs(x);
  return y;
}

DTensor leaky_relu(const DTensor& a, double slope) {
  DTensor y = a;
  for (auto& x : y.v) x = x > 0.0 ? x : slope * x;
  return y;
}

DTensor sigmoid(const DTensor& a) {
  DTensor y = a;
  for (auto& x : y.v)
    x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return y;
}

DTensor huber(const DTensor& a, double delta) {
  DTensor y = a;
  for (auto& x : y.v) {
    const double m = std::fabs(x);
    x = m <= delta ? 0.5 * x * x : delta * (m - 0.5 * delta);
  }
  return y;
}

double mean_all(const DTensor& a) {
  double acc = 0.0;
  for (double x : a.v) acc += x;
  return acc / double(a.v.size());
}

double sum_all(const DTensor& a) {
  double acc = 0.0;
  for (double x : a.v) acc += x;
  return acc;
}

DTensor upsample_nearest2(const DTensor& a) {
  const int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  DTensor y({B, C, 2 * H, 2 * W},
            std::vector<double>(size_t(B) * C * 4 * H * W, 0.0));
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double v = a.at(b, c, h, w);
          y.at(b, c, 2 * h, 2 * w) = v;
          y.at(b, c, 2 * h, 2 * w + 1) = v;
          y.at(b, c, 2 * h + 1, 2 * w) = v;
          y.at(b, c, 2 * h + 1, 2 * w + 1) = v;
        }
  return y;
}

DTensor bilinear_resize(const DTensor& a, int out_h, int out_w) {
  const int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  auto coef = [](int in_n, int out_n, int o, int& i0, int& i1, double& f) {
    double pos = (double(o) + 0.5) * double(in_n) / double(out_n) - 0.5;
    pos = std::clamp(pos, 0.0, double(in_n - 1));
    i0 = int(std::floor(pos));
    if (i0 > in_n - 1) i0 = in_n - 1;
    i1 = i0 + 1 <= in_n - 1 ? i0 + 1 : i0;
    f = pos - double(i0);
  };
  DTensor y({B, C, out_h, out_w},
            std::vector<double>(size_t(B) * C * out_h * out_w, 0.0));
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < out_h; ++oy) {
        int y0, y1;
        double fy;
        coef(H, out_h, oy, y0, y1, fy);
        for (int ox = 0; ox < out_w; ++ox) {
          int x0, x1;
          double fx;
          coef(W, out_w, ox, x0, x1, fx);
          const double top = (1 - fx) * a.at(b, c, y0, x0) + fx * a.at(b, c, y0, x1);
          const double bot = (1 - fx) * a.at(b, c, y1, x0) + fx * a.at(b, c, y1, x1);
          y.at(b, c, oy, ox) = (1 - fy) * top + fy * bot;
        }
      }
  return y;
}

DTensor instance_norm(const DTensor& a, double eps) {
  const int B = a.dim(0), C = a.dim(1);
  const int64_t plane = int64_t(a.dim(2)) * a.dim(3);
  DTensor y = a;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      double* p = y.v.data() + (int64_t(b) * C + c) * plane;
      double mean = 0.0;
      for (int64_t i = 0; i < plane; ++i) mean += p[i];
      mean /= double(plane);
      double var = 0.0;
      for (int64_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= double(plane);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
    }
  return y;
}

DTensor concat_ch(const DTensor& a, const DTensor& b) {
  const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const int H = a.dim(2), W = a.dim(3);
  const int64_t plane = int64_t(H) * W;
  DTensor y({B, Ca + Cb, H, W},
            std::vector<double>(size_t(B) * (Ca + Cb) * plane, 0.0));
  for (int bb = 0; bb < B; ++bb) {
    std::copy(a.v.begin() + bb * Ca * plane, a.v.begin() + (bb + 1) * Ca * plane,
              y.v.begin() + int64_t(bb) * (Ca + Cb) * plane);
    std::copy(b.v.begin() + bb * Cb * plane, b.v.begin() + (bb + 1) * Cb * plane,
              y.v.begin() + int64_t(bb) * (Ca + Cb) * plane + Ca * plane);
  }
  return y;
}

DTensor slice_ch(const DTensor& a, int c0, int c1) {
  const int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  const int64_t plane = int64_t(H) * W;
  const int Cs = c1 - c0;
  DTensor y({B, Cs, H, W}, std::vector<double>(size_t(B) * Cs * plane, 0.0));
  for (int bb = 0; bb < B; ++bb)
    std::copy(a.v.begin() + (int64_t(bb) * C + c0) * plane,
              a.v.begin() + (int64_t(bb) * C + c1) * plane,
              y.v.begin() + int64_t(bb) * Cs * plane);
  return y;
}

double bce_with_logits_mean(const DTensor& l, double target) {
  double acc = 0.0;
  for (double v : l.v)
    acc += std::max(v, 0.0) - v * target + std::log1p(std::exp(-std::fabs(v)));
  return acc / double(l.v.size());
}

}  // namespace dref

CheckReport check(const std::string& name, const LossFn& loss,
                  const RefLossFn& ref_loss,
                  const std::vector<DenseTensor>& inputs, double step,
                  double tolerance, double rel_floor) {
  CheckReport rep;
  rep.name = name;

  std::vector<NodePtr> leaves;
  for (const auto& t : inputs) leaves.push_back(make_leaf(t, true));
  NodePtr root = loss(leaves);
  backward(root);

  std::vector<DenseTensor> analytic;
  double grad_max = 0.0;
  for (auto& l : leaves) {
    if (!l->grad_ready || !l->grad.same_shape(l->value))
      throw std::logic_error("gradcheck: missing or misshapen gradient in " + name);
    analytic.push_back(l->grad);
    for (int64_t i = 0; i < l->grad.numel(); ++i)
      grad_max = std::max(grad_max, double(std::fabs(l->grad[i])));
  }

  std::vector<DTensor> work;
  for (const auto& t : inputs) work.emplace_back(t);
  for (size_t t = 0; t < work.size(); ++t) {
    for (size_t i = 0; i < work[t].v.size(); ++i) {
      const double saved = work[t].v[i];
      auto fd_at = [&](double h) {
        work[t].v[i] = saved + h;
        const double f_plus = ref_loss(work);
        work[t].v[i] = saved - h;
        const double f_minus = ref_loss(work);
        work[t].v[i] = saved;
        return (f_plus - f_minus) / (2.0 * h);
      };
      // Central difference at the requested step. Piecewise-linear ops
      // (leaky-ReLU, abs, Huber) have seams; when the step straddles one,
      // two estimates at different steps disagree, and the step is refined
      // until they agree. The refinement never consults the analytic value.
      double h = step;
      double fd = fd_at(h);
      for (int r = 0; r < 4; ++r) {
        const double fd_fine = fd_at(h / 4.0);
        const double agree_scale = std::max(
            {std::fabs(fd), std::fabs(fd_fine), rel_floor * grad_max, 1e-12});
        const bool agreed = std::fabs(fd - fd_fine) <= 0.25 * tolerance * agree_scale;
        fd = fd_fine;
        h /= 4.0;
        if (agreed) break;
      }
      const double an = double(analytic[t][int64_t(i)]);
      const double denom = std::max({std::fabs(an), std::fabs(fd),
                                     rel_floor * grad_max, 1e-12});
      rep.max_rel_err = std::max(rep.max_rel_err, std::fabs(an - fd) / denom);
      ++rep.n_entries;
    }
  }
  rep.pass = rep.max_rel_err < tolerance;
  return rep;
}

namespace {

DenseTensor random_tensor(std::vector<int> shape, Rng& rng, double lo = 0.1,
                          double hi = 1.0, bool signed_values = true) {
  DenseTensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = rng.uniform(lo, hi);
    if (signed_values && rng.uniform() < 0.5) v = -v;
    t[i] = float(v);
  }
  return t;
}

// Random fixed weights reduce a tensor to a scalar with O(1) per-element
// gradients. Both routes share the same weight tensor.
DenseTensor make_weights(const std::vector<int>& shape, uint64_t seed) {
  Rng rng(seed);
  DenseTensor w(shape);
  for (int64_t i = 0; i < w.numel(); ++i)
    w[i] = float(rng.uniform() < 0.5 ? -1.0 : 1.0) * float(rng.uniform(0.5, 1.5));
  return w;
}

NodePtr weighted_sum(const NodePtr& t, const DenseTensor& w) {
  return ops::sum_all(ops::mul(t, make_const(w)));
}

double weighted_sum_ref(const DTensor& t, const DenseTensor& w) {
  double acc = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t.v[size_t(i)] * double(w[i]);
  return acc;
}

void run_seeds(std::vector<CheckReport>& out, const std::string& name, int n_seeds,
               uint64_t seed0,
               const std::function<CheckReport(const std::string&, uint64_t)>& one) {
  for (int s = 0; s < n_seeds; ++s)
    out.push_back(one(name + "#" + std::to_string(s), seed0 + uint64_t(s) * 7919));
}

// Double-precision mirrors of the two networks, evaluated against the same
// canonical parameter order as the f32 models.
struct DRefParams {
  const std::vector<model::ParamSpec>* specs;
  const std::vector<DTensor>* values;

  const DTensor& find(const std::string& name) const {
    for (size_t i = 0; i < specs->size(); ++i)
      if ((*specs)[i].name == name) return (*values)[i];
    throw std::out_of_range("dref param not found: " + name);
  }
};

DTensor dref_conv_block(const DTensor& x, const DRefParams& p, const std::string& name,
                        int stride, int pad) {
  return dref::bias_add(dref::conv2d(x, p.find(name + ".w"), stride, pad),
                        p.find(name + ".b"));
}

DTensor dref_generator_forward(const DTensor& x, const model::GeneratorConfig& cfg,
                               const DRefParams& p) {
  const double slope = double(cfg.leaky_slope);
  const int half = cfg.channels_down / 2;
  DTensor h = dref::leaky_relu(dref_conv_block(x, p, "stem", 1, 1), slope);
  h = dref::leaky_relu(dref_conv_block(h, p, "down", 2, 1), slope);
  for (int i = 0; i < cfg.n_scpa_blocks; ++i) {
    const std::string b = "block" + std::to_string(i);
    DTensor t = dref_conv_block(h, p, b + ".in", 1, 0);
    DTensor ta = dref::slice_ch(t, 0, half);
    DTensor tb = dref::slice_ch(t, half, 2 * half);
    DTensor attn = dref::sigmoid(dref_conv_block(ta, p, b + ".attn", 1, 0));
    DTensor a = dref::leaky_relu(
        dref_conv_block(dref::mul(ta, attn), p, b + ".a", 1, 1), slope);
    DTensor bb = dref::leaky_relu(dref_conv_block(tb, p, b + ".b", 1, 1), slope);
    DTensor merged = dref_conv_block(dref::concat_ch(a, bb), p, b + ".merge", 1, 0);
    h = dref::add(merged, h);
  }
  h = dref::upsample_nearest2(h);
  DTensor attn = dref::sigmoid(dref_conv_block(h, p, "upa.attn", 1, 0));
  h = dref::leaky_relu(dref_conv_block(dref::mul(h, attn), p, "upa.conv", 1, 1), slope);
  DTensor y = dref_conv_block(h, p, "head", 1, 1);
  return dref::add(y, dref::bilinear_resize(x, x.dim(2), x.dim(3)));
}

DTensor dref_discriminator_forward(const DTensor& xe, const DTensor& y,
                                   const model::DiscriminatorConfig& cfg,
                                   const DRefParams& p) {
  DTensor h = dref::concat_ch(xe, y);
  h = dref::leaky_relu(dref_conv_block(h, p, "d0", 1, 0), 0.2);
  for (size_t i = 1; i < cfg.widths.size(); ++i) {
    h = dref_conv_block(h, p, "d" + std::to_string(i), 1, 0);
    h = dref::leaky_relu(dref::instance_norm(h, double(1e-5f)), 0.2);
  }
  return dref_conv_block(h, p, "d" + std::to_string(cfg.widths.size()), 1, 0);
}

}  // namespace

std::vector<CheckReport> standard_battery(uint64_t seed) {
  std::vector<CheckReport> out;
  const int kSeeds = 5;

  struct ConvCase {
    const char* name;
    std::vector<int> xs, ks;
    int stride, pad;
    uint64_t salt;
  };
  const ConvCase conv_cases[] = {
      {"conv2d.s1p0", {2, 3, 8, 8}, {4, 3, 3, 3}, 1, 0, 0x5bd1e995},
      {"conv2d.s1p1", {1, 2, 7, 6}, {3, 2, 3, 3}, 1, 1, 0x2545f491},
      {"conv2d.s2p1", {2, 2, 8, 7}, {3, 2, 3, 3}, 2, 1, 0x9e3779b9},
      {"conv2d.rect", {1, 2, 6, 8}, {2, 2, 2, 3}, 3, 2, 0x12345},
  };
  for (const auto& cc : conv_cases) {
    run_seeds(out, cc.name, kSeeds, seed + cc.salt % 97,
              [cc](const std::string& n, uint64_t s) {
      Rng rng(s);
      auto x = random_tensor(cc.xs, rng);
      auto k = random_tensor(cc.ks, rng);
      const int Ho = (cc.xs[2] + 2 * cc.pad - cc.ks[2]) / cc.stride + 1;
      const int Wo = (cc.xs[3] + 2 * cc.pad - cc.ks[3]) / cc.stride + 1;
      const auto w = make_weights({cc.xs[0], cc.ks[0], Ho, Wo}, s ^ cc.salt);
      return check(n, [&](const std::vector<NodePtr>& in) {
        return weighted_sum(ops::conv2d(in[0], in[1], cc.stride, cc.pad), w);
      }, [&](const std::vector<DTensor>& in) {
        return weighted_sum_ref(dref::conv2d(in[0], in[1], cc.stride, cc.pad), w);
      }, {x, k});
    });
  }

  run_seeds(out, "bias_add", kSeeds, seed + 5, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto x = random_tensor({2, 3, 5, 5}, rng);
    auto b = random_tensor({3}, rng);
    const auto w = make_weights({2, 3, 5, 5}, s ^ 0x777);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::bias_add(in[0], in[1]), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::bias_add(in[0], in[1]), w);
    }, {x, b});
  });

  run_seeds(out, "add.sub.mul", kSeeds, seed + 6, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({2, 2, 4, 4}, rng);
    auto b = random_tensor({2, 2, 4, 4}, rng);
    auto c = random_tensor({2, 2, 4, 4}, rng);
    const auto w = make_weights({2, 2, 4, 4}, s ^ 0xabc);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::mul(ops::add(in[0], in[1]), ops::sub(in[1], in[2])), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::mul(dref::add(in[0], in[1]),
                                        dref::sub(in[1], in[2])), w);
    }, {a, b, c});
  });

  run_seeds(out, "scale.abs", kSeeds, seed + 7, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({1, 3, 6, 6}, rng);
    const auto w = make_weights({1, 3, 6, 6}, s ^ 0xdef);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::abs_val(ops::scale(in[0], 1.7f)), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::abs_val(dref::scale(in[0], double(1.7f))), w);
    }, {a});
  });

  run_seeds(out, "leaky_relu", kSeeds, seed + 8, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({2, 2, 6, 6}, rng);
    const auto w = make_weights({2, 2, 6, 6}, s ^ 0x31337);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::leaky_relu(in[0], 0.2f), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::leaky_relu(in[0], double(0.2f)), w);
    }, {a});
  });

  run_seeds(out, "sigmoid", kSeeds, seed + 9, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({1, 2, 6, 6}, rng, 0.1, 2.0);
    const auto w = make_weights({1, 2, 6, 6}, s ^ 0x51515);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::sigmoid(in[0]), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::sigmoid(in[0]), w);
    }, {a});
  });

  run_seeds(out, "huber", kSeeds, seed + 10, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    // Values straddle both Huber regimes, away from the |a| = delta seam.
    DenseTensor a({2, 1, 6, 6});
    for (int64_t i = 0; i < a.numel(); ++i) {
      double v = rng.uniform() < 0.5 ? rng.uniform(0.05, 0.62) : rng.uniform(0.78, 1.8);
      a[i] = float(rng.uniform() < 0.5 ? -v : v);
    }
    const auto w = make_weights({2, 1, 6, 6}, s ^ 0x8888);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::huber(in[0], 0.7f), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::huber(in[0], double(0.7f)), w);
    }, {a});
  });

  run_seeds(out, "mean.sum", kSeeds, seed + 11, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({2, 2, 5, 5}, rng);
    return check(n, [](const std::vector<NodePtr>& in) {
      return ops::add(ops::mean_all(in[0]), ops::scale(ops::sum_all(in[0]), 0.25f));
    }, [](const std::vector<DTensor>& in) {
      return dref::mean_all(in[0]) + double(0.25f) * dref::sum_all(in[0]);
    }, {a});
  });

  run_seeds(out, "upsample_nearest2", kSeeds, seed + 12, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({1, 2, 5, 4}, rng);
    const auto w = make_weights({1, 2, 10, 8}, s ^ 0x4242);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::upsample_nearest2(in[0]), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::upsample_nearest2(in[0]), w);
    }, {a});
  });

  run_seeds(out, "bilinear_resize", kSeeds, seed + 13, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({1, 2, 6, 5}, rng);
    const auto w = make_weights({1, 2, 9, 7}, s ^ 0x2424);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::bilinear_resize(in[0], 9, 7), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::bilinear_resize(in[0], 9, 7), w);
    }, {a});
  });

  run_seeds(out, "instance_norm", kSeeds, seed + 14, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({2, 2, 5, 5}, rng, 0.2, 2.0);
    const auto w = make_weights({2, 2, 5, 5}, s ^ 0x6666);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::instance_norm(in[0]), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::instance_norm(in[0], double(1e-5f)), w);
    }, {a});
  });

  run_seeds(out, "concat.slice", kSeeds, seed + 15, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({2, 2, 4, 4}, rng);
    auto b = random_tensor({2, 3, 4, 4}, rng);
    const auto w = make_weights({2, 3, 4, 4}, s ^ 0x1357);
    return check(n, [&](const std::vector<NodePtr>& in) {
      return weighted_sum(ops::slice_ch(ops::concat_ch(in[0], in[1]), 1, 4), w);
    }, [&](const std::vector<DTensor>& in) {
      return weighted_sum_ref(dref::slice_ch(dref::concat_ch(in[0], in[1]), 1, 4), w);
    }, {a, b});
  });

  run_seeds(out, "bce_with_logits", kSeeds, seed + 16, [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto a = random_tensor({1, 1, 6, 6}, rng, 0.1, 2.5);
    return check(n, [](const std::vector<NodePtr>& in) {
      return ops::add(ops::bce_with_logits_mean(in[0], 1.0f),
                      ops::scale(ops::bce_with_logits_mean(in[0], 0.0f), 0.5f));
    }, [](const std::vector<DTensor>& in) {
      return dref::bce_with_logits_mean(in[0], 1.0) +
             double(0.5f) * dref::bce_with_logits_mean(in[0], 0.0);
    }, {a});
  });

  run_seeds(out, "composite.conv_lrelu_mean", kSeeds, seed + 17,
            [](const std::string& n, uint64_t s) {
    Rng rng(s);
    auto x = random_tensor({1, 2, 6, 6}, rng);
    auto k = random_tensor({3, 2, 3, 3}, rng);
    return check(n, [](const std::vector<NodePtr>& in) {
      return ops::mean_all(ops::leaky_relu(ops::conv2d(in[0], in[1], 1, 0), 0.2f));
    }, [](const std::vector<DTensor>& in) {
      return dref::mean_all(dref::leaky_relu(dref::conv2d(in[0], in[1], 1, 0),
                                             double(0.2f)));
    }, {x, k});
  });

  run_seeds(out, "generator.params", kSeeds, seed + 18,
            [](const std::string& n, uint64_t s) {
    model::GeneratorConfig cfg;
    cfg.n_scpa_blocks = 1;
    cfg.channels_down = 4;
    cfg.channels_up = 4;
    auto init = model::init_generator(cfg, s, /*zero_head=*/false);
    const auto specs = model::generator_param_specs(cfg);
    Rng rng(s ^ 0xfeed);
    auto x = random_tensor({1, 1, 8, 8}, rng, 0.1, 1.0, false);
    std::vector<DenseTensor> inputs;
    inputs.push_back(x);
    for (const auto& p : init.store.items) inputs.push_back(p.node->value);
    const auto w = make_weights({1, 1, 8, 8}, s ^ 0xbeef);
    return check(n, [&](const std::vector<NodePtr>& in) {
      auto g = model::generator_from_leaves(cfg, {in.begin() + 1, in.end()});
      return weighted_sum(model::generator_forward(in[0], g), w);
    }, [&](const std::vector<DTensor>& in) {
      std::vector<DTensor> params(in.begin() + 1, in.end());
      DRefParams p{&specs, &params};
      return weighted_sum_ref(dref_generator_forward(in[0], cfg, p), w);
    }, inputs);
  });

  run_seeds(out, "discriminator.params", kSeeds, seed + 19,
            [](const std::string& n, uint64_t s) {
    model::DiscriminatorConfig cfg;
    cfg.widths = {6, 8};
    auto init = model::init_discriminator(cfg, s);
    const auto specs = model::discriminator_param_specs(cfg);
    Rng rng(s ^ 0xd00d);
    auto a = random_tensor({1, 1, 6, 6}, rng, 0.1, 1.0, false);
    auto b = random_tensor({1, 1, 6, 6}, rng, 0.1, 1.0, false);
    std::vector<DenseTensor> inputs;
    inputs.push_back(a);
    inputs.push_back(b);
    for (const auto& p : init.store.items) inputs.push_back(p.node->value);
    const auto w = make_weights({1, 1, 6, 6}, s ^ 0xcafe);
    return check(n, [&](const std::vector<NodePtr>& in) {
      auto d = model::discriminator_from_leaves(cfg, {in.begin() + 2, in.end()});
      return weighted_sum(model::discriminator_forward(in[0], in[1], d), w);
    }, [&](const std::vector<DTensor>& in) {
      std::vector<DTensor> params(in.begin() + 2, in.end());
      DRefParams p{&specs, &params};
      return weighted_sum_ref(dref_discriminator_forward(in[0], in[1], cfg, p), w);
    }, inputs);
  });

  return out;
}

}  // namespace timr::gradcheck
