#pragma once

// Inner-loop arithmetic used by the simplex solver and synthesis.
//
// Every kernel has a scalar reference implementation. On x86-64 an AVX2/FMA
// variant is compiled into a separate translation unit and picked at runtime
// when the CPU supports it. The two tables are not bit-identical (FMA rounds
// once and the vector path sums in a different order); they agree to within
// a few ulps of the magnitude sum, which the equivalence tests pin.

#include <cstddef>
#include <span>
#include <string_view>

namespace scm::kernels {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

/// Null when the variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table() noexcept;

/// Table used by the library. Chosen once per process: the SCM_KERNEL
/// environment variable ("scalar" or "avx2") wins, otherwise the best
/// supported variant.
const KernelTable& active() noexcept;

/// Overrides the active table. Returns false for an unknown or unsupported
/// name. Not thread-safe; call before any parallel work starts.
bool select(std::string_view name) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace scm::kernels
