#include <cstdlib>
#include <cstring>

#include "vrx/common.hpp"
#include "vrx/kernels/kernels.hpp"

namespace vrx::kern {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

static const Kernels& select() {
  const char* env = std::getenv("VRX_KERNELS");
  if (env && std::strcmp(env, "scalar") == 0) return scalar_table();
  if (env && std::strcmp(env, "avx2") == 0) {
    const Kernels* t = avx2_table();
    if (!t) throw ConfigError("VRX_KERNELS=avx2 requested but AVX2 is unavailable on this host");
    return *t;
  }
  if (env && *env) throw ConfigError(std::string("unknown VRX_KERNELS value: ") + env);
  if (const Kernels* t = avx2_table()) return *t;
  return scalar_table();
}

const Kernels& active() {
  static const Kernels& table = select();
  return table;
}

}  // namespace vrx::kern
