#include "geovec/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace geovec::simd {

#if !GEOVEC_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif
#if !GEOVEC_HAVE_NEON
const KernelTable* neon_kernels() { return nullptr; }
#endif

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("GEOVEC_SIMD")) {
    if (std::string_view(env) == "scalar") return scalar_kernels();
  }
  if (const auto* t = avx2_kernels()) return *t;
  if (const auto* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace geovec::simd
