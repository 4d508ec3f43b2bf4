#pragma once

// Elementwise transcendental kernels. vector_math.cpp is compiled so the
// loops vectorize through glibc's libmvec when available.

#include <cstddef>

namespace hcinr::detail {

// The trigonometric kernels evaluate at w * x[i].
void vsin(const double* x, double w, double* out, std::size_t n);
void vcos(const double* x, double w, double* out, std::size_t n);
void vsincos(const double* x, double w, double* s, double* c, std::size_t n);
void vtanh(const double* x, double* out, std::size_t n);

// Raises glibc's mmap threshold so large tape buffers are recycled between
// steps instead of being returned to the kernel.
void tune_allocator();

}  // namespace hcinr::detail
