#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "snap/kernels.hpp"

using namespace snap::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Lengths straddling the 4-wide vector body and its tail.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100, 1023};

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  const auto& k = scalar_table();
  std::mt19937_64 rng(7);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng), y = random_vec(n, rng), z = random_vec(n, rng);
    double d = 0, s = 0, m = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d += x[i] * y[i];
      s += x[i];
      m = std::max(m, std::abs(x[i] - y[i]));
    }
    CHECK(k.dot(x.data(), y.data(), n) == doctest::Approx(d).epsilon(1e-12));
    CHECK(k.sum(x.data(), n) == doctest::Approx(s).epsilon(1e-12));
    CHECK(k.max_abs_diff(x.data(), y.data(), n) == m);

    auto y2 = y;
    k.axpy(0.5, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y[i] + 0.5 * x[i]));
    auto z2 = z;
    k.fma3(x.data(), y.data(), z2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(z2[i] == doctest::Approx(z[i] + x[i] * y[i]));
    auto y3 = y;
    k.max_inplace(x.data(), y3.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y3[i] == std::max(x[i], y[i]));
  }
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* v = avx2_table();
  if (!v || !cpu_supports(Level::avx2)) {
    MESSAGE("AVX2 variant unavailable; skipped");
    return;
  }
  const auto& s = scalar_table();
  std::mt19937_64 rng(11);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng), y = random_vec(n, rng), z = random_vec(n, rng);
    CAPTURE(n);
    // Reductions reassociate, so they agree to rounding only.
    CHECK(v->dot(x.data(), y.data(), n) == doctest::Approx(s.dot(x.data(), y.data(), n)).epsilon(1e-13));
    CHECK(v->sum(x.data(), n) == doctest::Approx(s.sum(x.data(), n)).epsilon(1e-13));
    CHECK(v->max_abs_diff(x.data(), y.data(), n) == s.max_abs_diff(x.data(), y.data(), n));

    auto a = y, b = y;
    v->axpy(-1.25, x.data(), a.data(), n);
    s.axpy(-1.25, x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));

    a = z, b = z;
    v->fma3(x.data(), y.data(), a.data(), n);
    s.fma3(x.data(), y.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));

    a = y, b = y;
    v->mul_inplace(x.data(), a.data(), n);
    s.mul_inplace(x.data(), b.data(), n);
    CHECK(a == b);

    a = x, b = x;
    v->scale(3.5, a.data(), n);
    s.scale(3.5, b.data(), n);
    CHECK(a == b);

    a = y, b = y;
    v->max_inplace(x.data(), a.data(), n);
    s.max_inplace(x.data(), b.data(), n);
    CHECK(a == b);
  }
}

TEST_CASE("kernel level can be forced and restored") {
  const Level before = active_level();
  set_level(Level::scalar);
  CHECK(active_level() == Level::scalar);
  CHECK(&active() == &scalar_table());
  if (cpu_supports(Level::avx2)) {
    set_level(Level::avx2);
    CHECK(active_level() == Level::avx2);
  } else {
    CHECK_THROWS(set_level(Level::avx2));
  }
  set_level(before);
}
