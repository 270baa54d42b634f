#include "kodm/parallel.hpp"

#include <atomic>
#include <cstdlib>

namespace kodm::parallel {

namespace {

std::atomic<int> thread_override{0};

int env_threads() {
  static const int cached = [] {
    const char* s = std::getenv("KODM_THREADS");
    if (s == nullptr || *s == '\0') return 0;
    const long v = std::strtol(s, nullptr, 10);
    return v >= 1 ? static_cast<int>(v) : 1;
  }();
  return cached;
}

} // namespace

int max_threads() {
  const int forced = thread_override.load(std::memory_order_relaxed);
  if (forced > 0) return forced;
  const int env = env_threads();
  if (env > 0) return env;
#ifdef KODM_HAVE_OPENMP
  const int hw = omp_get_max_threads();
  return hw >= 1 ? hw : 1;
#else
  return 1;
#endif
}

void set_threads(int n) {
  thread_override.store(n > 0 ? n : 0, std::memory_order_relaxed);
}

} // namespace kodm::parallel
