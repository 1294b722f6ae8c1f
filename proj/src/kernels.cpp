#include "mccf/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace mccf::kernels {

bool avx2_available() {
#if defined(MCCF_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops& scalar_ops() {
  static const Ops o = detail::make_scalar_ops();
  return o;
}

const Ops& avx2_ops() {
  static const Ops o = detail::make_avx2_ops();
  return o;
}

const Ops& ops() {
  // MCCF_KERNELS=scalar forces the reference implementation (debugging,
  // cross-ISA comparisons); anything else falls through to CPU detection.
  static const Ops& active = []() -> const Ops& {
    const char* force = std::getenv("MCCF_KERNELS");
    if (force != nullptr && std::strcmp(force, "scalar") == 0) return scalar_ops();
    return avx2_available() ? avx2_ops() : scalar_ops();
  }();
  return active;
}

const char* active_isa() { return ops().name; }

}  // namespace mccf::kernels
