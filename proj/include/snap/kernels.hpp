#pragma once

// Dense arithmetic kernels used by belief filtering and value backups.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// implementation. The active table is chosen once at startup from the CPU
// feature bits; SNAP_SIMD=scalar|avx2 in the environment overrides it.

#include <cstddef>
#include <span>
#include <string_view>

namespace snap::kernels {

enum class Level { scalar, avx2 };

struct KernelTable {
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // z[i] += x[i] * y[i]
  void (*fma3)(const double* x, const double* y, double* z, std::size_t n);
  // y[i] = x[i] * y[i]
  void (*mul_inplace)(const double* x, double* y, std::size_t n);
  // x[i] *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  // y[i] = max(x[i], y[i])
  void (*max_inplace)(const double* x, double* y, std::size_t n);
  // max_i |x[i] - y[i]|
  double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
};

const KernelTable& scalar_table();
// Returns nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Level level);
Level active_level();
std::string_view level_name(Level level);
// Forces a level (tests and benchmarks). Throws if unsupported on this CPU.
void set_level(Level level);

const KernelTable& active();

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void fma3(std::span<const double> x, std::span<const double> y, std::span<double> z) {
  active().fma3(x.data(), y.data(), z.data(), x.size());
}
inline void mul_inplace(std::span<const double> x, std::span<double> y) {
  active().mul_inplace(x.data(), y.data(), x.size());
}
inline void scale(double alpha, std::span<double> x) {
  active().scale(alpha, x.data(), x.size());
}
inline double sum(std::span<const double> x) {
  return active().sum(x.data(), x.size());
}
inline void max_inplace(std::span<const double> x, std::span<double> y) {
  active().max_inplace(x.data(), y.data(), x.size());
}
inline double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().max_abs_diff(x.data(), y.data(), x.size());
}

}  // namespace snap::kernels
