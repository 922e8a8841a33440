#include "timr/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>

namespace timr::kern {

bool cpu_supports_avx2_fma() {
#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelSet* resolve(const std::string& name) {
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") {
    const KernelSet* k = avx2_kernels_compiled();
    if (!k) throw std::runtime_error("kernels: avx2 variant not built into this binary");
    if (!cpu_supports_avx2_fma())
      throw std::runtime_error("kernels: this CPU does not support avx2+fma");
    return k;
  }
  if (name == "auto") {
    const KernelSet* k = avx2_kernels_compiled();
    if (k && cpu_supports_avx2_fma()) return k;
    return &scalar_kernels();
  }
  throw std::invalid_argument("kernels: unknown variant '" + name +
                              "' (expected scalar, avx2 or auto)");
}

std::atomic<const KernelSet*> g_active{nullptr};

}  // namespace

const KernelSet& active_kernels() {
  const KernelSet* k = g_active.load(std::memory_order_acquire);
  if (k) return *k;
  const char* env = std::getenv("TIMR_KERNELS");
  k = resolve(env ? env : "auto");
  g_active.store(k, std::memory_order_release);
  return *k;
}

void force_kernels(const std::string& name) {
  g_active.store(resolve(name), std::memory_order_release);
}

}  // namespace timr::kern
