#include "vector_math.hpp"

#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hcinr::detail {

void vsin(const double* x, double w, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(w * x[i]);
}

void vcos(const double* x, double w, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(w * x[i]);
}

void vsincos(const double* x, double w, double* s, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = std::sin(w * x[i]);
    c[i] = std::cos(w * x[i]);
  }
}

void vtanh(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace hcinr::detail
