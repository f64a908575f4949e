#include <cstdlib>
#include <string_view>

#include "dsex/simd/kernels.hpp"

namespace dsex::simd {

#ifndef DSEX_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

const KernelTable& active_kernels() {
  static const KernelTable& chosen = [&]() -> const KernelTable& {
    const char* env = std::getenv("DSEX_SIMD");
    if (env && std::string_view(env) == "scalar") return scalar_kernels();
    if (const KernelTable* k = avx2_kernels()) return *k;
    return scalar_kernels();
  }();
  return chosen;
}

}  // namespace dsex::simd
