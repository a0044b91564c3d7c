#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "snap/kernels.hpp"

namespace snap::kernels {

#ifndef SNAP_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports(Level level) {
  switch (level) {
    case Level::scalar:
      return true;
    case Level::avx2:
#if defined(SNAP_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

std::string_view level_name(Level level) {
  return level == Level::avx2 ? "avx2" : "scalar";
}

namespace {

Level detect() {
  if (const char* env = std::getenv("SNAP_SIMD")) {
    std::string v(env);
    if (v == "scalar") return Level::scalar;
    if (v == "avx2" && cpu_supports(Level::avx2)) return Level::avx2;
  }
  return cpu_supports(Level::avx2) ? Level::avx2 : Level::scalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{
      detect() == Level::avx2 ? avx2_table() : &scalar_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Level active_level() {
  return current().load(std::memory_order_acquire) == &scalar_table() ? Level::scalar : Level::avx2;
}

void set_level(Level level) {
  if (!cpu_supports(level))
    throw std::runtime_error("SIMD level not supported on this CPU: " + std::string(level_name(level)));
  current().store(level == Level::avx2 ? avx2_table() : &scalar_table(), std::memory_order_release);
}

}  // namespace snap::kernels
