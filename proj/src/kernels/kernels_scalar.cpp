#include "timr/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace timr::kern {

Conv2dDims make_conv2d_dims(int batch, int cin, int in_h, int in_w, int cout,
                            int k_h, int k_w, int stride, int pad) {
  if (batch < 1 || cin < 1 || cout < 1)
    throw std::invalid_argument("conv2d: batch and channel counts must be >= 1");
  if (in_h < 1 || in_w < 1)
    throw std::invalid_argument("conv2d: spatial extents must be >= 1");
  if (k_h < 1 || k_w < 1) throw std::invalid_argument("conv2d: kernel extents must be >= 1");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  if (k_h > in_h + 2 * pad || k_w > in_w + 2 * pad)
    throw std::invalid_argument(
        "conv2d: kernel " + std::to_string(k_h) + "x" + std::to_string(k_w) +
        " exceeds padded input " + std::to_string(in_h + 2 * pad) + "x" +
        std::to_string(in_w + 2 * pad));
  Conv2dDims d;
  d.batch = batch;
  d.cin = cin;
  d.in_h = in_h;
  d.in_w = in_w;
  d.cout = cout;
  d.k_h = k_h;
  d.k_w = k_w;
  d.stride = stride;
  d.pad = pad;
  d.out_h = (in_h + 2 * pad - k_h) / stride + 1;
  d.out_w = (in_w + 2 * pad - k_w) / stride + 1;
  return d;
}

namespace {

void conv2d_forward_scalar(float* out, const float* in, const float* kernel,
                           const Conv2dDims& d) {
  const int64_t in_plane = int64_t(d.in_h) * d.in_w;
  const int64_t out_plane = int64_t(d.out_h) * d.out_w;
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      float* out_p = out + (int64_t(b) * d.cout + co) * out_plane;
      const float* ker_c = kernel + int64_t(co) * d.cin * d.k_h * d.k_w;
      for (int oh = 0; oh < d.out_h; ++oh) {
        const int ih0 = oh * d.stride - d.pad;
        for (int ow = 0; ow < d.out_w; ++ow) {
          const int iw0 = ow * d.stride - d.pad;
          float acc = 0.0f;
          for (int ci = 0; ci < d.cin; ++ci) {
            const float* in_p = in + (int64_t(b) * d.cin + ci) * in_plane;
            const float* ker_p = ker_c + int64_t(ci) * d.k_h * d.k_w;
            for (int kh = 0; kh < d.k_h; ++kh) {
              const int ih = ih0 + kh;
              const bool row_ok = ih >= 0 && ih < d.in_h;
              const float* in_row = in_p + int64_t(row_ok ? ih : 0) * d.in_w;
              const float* ker_row = ker_p + int64_t(kh) * d.k_w;
              for (int kw = 0; kw < d.k_w; ++kw) {
                const int iw = iw0 + kw;
                // Zero-padding taps contribute an exact +0.0 term.
                const float xv =
                    row_ok && iw >= 0 && iw < d.in_w ? in_row[iw] : 0.0f;
                acc = std::fma(ker_row[kw], xv, acc);
              }
            }
          }
          out_p[int64_t(oh) * d.out_w + ow] = acc;
        }
      }
    }
  }
}

void conv2d_grad_kernel_scalar(float* d_kernel, const float* in,
                               const float* d_out, const Conv2dDims& d) {
  const int64_t in_plane = int64_t(d.in_h) * d.in_w;
  const int64_t out_plane = int64_t(d.out_h) * d.out_w;
  for (int co = 0; co < d.cout; ++co) {
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int kh = 0; kh < d.k_h; ++kh) {
        for (int kw = 0; kw < d.k_w; ++kw) {
          // Eight interleaved partial sums; lane = ow % 8. Matches the SIMD
          // variant lane-for-lane. Padding taps are exact +0.0 terms.
          float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
          for (int b = 0; b < d.batch; ++b) {
            const float* in_p = in + (int64_t(b) * d.cin + ci) * in_plane;
            const float* dy_p = d_out + (int64_t(b) * d.cout + co) * out_plane;
            for (int oh = 0; oh < d.out_h; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              const bool row_ok = ih >= 0 && ih < d.in_h;
              const float* in_row = in_p + int64_t(row_ok ? ih : 0) * d.in_w;
              const float* dy_row = dy_p + int64_t(oh) * d.out_w;
              for (int ow = 0; ow < d.out_w; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                const float xv =
                    row_ok && iw >= 0 && iw < d.in_w ? in_row[iw] : 0.0f;
                lanes[ow & 7] = std::fma(dy_row[ow], xv, lanes[ow & 7]);
              }
            }
          }
          float acc = lanes[0];
          for (int j = 1; j < 8; ++j) acc += lanes[j];
          d_kernel[((int64_t(co) * d.cin + ci) * d.k_h + kh) * d.k_w + kw] = acc;
        }
      }
    }
  }
}

void add_scalar(float* out, const float* a, const float* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void sub_scalar(float* out, const float* a, const float* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void mul_scalar(float* out, const float* a, const float* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void abs_scalar(float* out, const float* a, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = std::fabs(a[i]);
}
void leaky_fwd_scalar(float* out, const float* x, float slope, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}
void leaky_bwd_acc_scalar(float* dx, const float* dy, const float* x,
                          float slope, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    dx[i] = std::fma(dy[i], x[i] > 0.0f ? 1.0f : slope, dx[i]);
}
void scale_scalar(float* out, const float* x, float s, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] * s;
}
void axpy_acc_scalar(float* y, const float* x, float a, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::fma(x[i], a, y[i]);
}
void fma_acc_scalar(float* y, const float* a, const float* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

}  // namespace

const KernelSet& scalar_kernels() {
  static const KernelSet set = {
      "scalar",
      conv2d_forward_scalar,
      conv2d_grad_kernel_scalar,
      add_scalar,
      sub_scalar,
      mul_scalar,
      abs_scalar,
      leaky_fwd_scalar,
      leaky_bwd_acc_scalar,
      scale_scalar,
      axpy_acc_scalar,
      fma_acc_scalar,
  };
  return set;
}

}  // namespace timr::kern
