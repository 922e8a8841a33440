#pragma once

#include <cstdint>
#include <string>

// Data-parallel inner loops used by the tensor/autodiff layer. Every routine
// exists as a scalar reference implementation and, on x86-64, as an AVX2+FMA
// variant selected at runtime. The two are bit-for-bit equivalent: per output
// element both accumulate with fused multiply-add in the same documented
// order, so kernel selection never changes results.
//
// Reduction orders (the determinism contract):
//  - conv2d_forward: each output element accumulates over (cin, kh, kw) in
//    increasing row-major order; out-of-range (zero-padding) taps contribute
//    exact +0.0 terms at their position in the chain.
//  - conv2d_grad_kernel: each kernel-gradient entry keeps 8 partial sums,
//    lane j absorbing output columns with ow % 8 == j while (b, oh, ow) run
//    in increasing order; lanes are folded left-to-right at the end.
//  - Elementwise maps have no reduction and are trivially order-free.

namespace timr::kern {

struct Conv2dDims {
  int batch = 0;
  int cin = 0;
  int in_h = 0;
  int in_w = 0;
  int cout = 0;
  int k_h = 0;
  int k_w = 0;
  int stride = 1;
  int pad = 0;
  int out_h = 0;
  int out_w = 0;
};

// Validates and completes a Conv2dDims (computes out_h/out_w).
// Throws std::invalid_argument on degenerate geometry.
Conv2dDims make_conv2d_dims(int batch, int cin, int in_h, int in_w, int cout,
                            int k_h, int k_w, int stride, int pad);

using Conv2dForwardFn = void (*)(float* out, const float* in,
                                 const float* kernel, const Conv2dDims& d);
using Conv2dGradKernelFn = void (*)(float* d_kernel, const float* in,
                                    const float* d_out, const Conv2dDims& d);
using Map2Fn = void (*)(float* out, const float* a, const float* b, int64_t n);
using MapFn = void (*)(float* out, const float* a, int64_t n);
using LeakyFwdFn = void (*)(float* out, const float* x, float slope, int64_t n);
using LeakyBwdAccFn = void (*)(float* dx, const float* dy, const float* x,
                               float slope, int64_t n);
using ScaleFn = void (*)(float* out, const float* x, float s, int64_t n);
using AxpyAccFn = void (*)(float* y, const float* x, float a, int64_t n);
using FmaAccFn = void (*)(float* y, const float* a, const float* b, int64_t n);

struct KernelSet {
  const char* name;
  Conv2dForwardFn conv2d_forward;
  Conv2dGradKernelFn conv2d_grad_kernel;
  Map2Fn add;
  Map2Fn sub;
  Map2Fn mul;
  MapFn abs_val;
  LeakyFwdFn leaky_relu_fwd;
  LeakyBwdAccFn leaky_relu_bwd_acc;  // dx += dy * (x > 0 ? 1 : slope)
  ScaleFn scale;                     // out = x * s
  AxpyAccFn axpy_acc;                // y += x * a
  FmaAccFn fma_acc;                  // y += a * b (elementwise, fused)
};

const KernelSet& scalar_kernels();

// AVX2+FMA variant; null when the binary was built without x86 support.
const KernelSet* avx2_kernels_compiled();

// True when the running CPU can execute the AVX2 variant.
bool cpu_supports_avx2_fma();

// Active set: honors force_kernels()/TIMR_KERNELS ("scalar", "avx2", "auto"),
// otherwise picks the fastest variant the CPU supports.
const KernelSet& active_kernels();
void force_kernels(const std::string& name);

}  // namespace timr::kern
