#include "scm/kernels.hpp"

#include <cstdlib>

#include "kernels_impl.hpp"

namespace scm::kernels {
namespace {

constexpr KernelTable kScalar{"scalar", &detail::dot_scalar, &detail::axpy_scalar,
                              &detail::squared_distance_scalar};

#if defined(SCM_HAVE_AVX2)
constexpr KernelTable kAvx2{"avx2", &detail::dot_avx2, &detail::axpy_avx2,
                            &detail::squared_distance_avx2};

bool cpu_has_avx2() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable* lookup(std::string_view name) noexcept {
  if (name == "scalar") return &kScalar;
  if (name == "avx2") return avx2_table();
  return nullptr;
}

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("SCM_KERNEL")) {
    if (const KernelTable* t = lookup(env)) return t;
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &kScalar;
}

const KernelTable*& current() noexcept {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(SCM_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept { return *current(); }

bool select(std::string_view name) noexcept {
  const KernelTable* t = lookup(name);
  if (t == nullptr) return false;
  current() = t;
  return true;
}

}  // namespace scm::kernels
