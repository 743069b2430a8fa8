#pragma once

// Data-parallel inner loops shared by the encoder and the index.
//
// Every variant (scalar, AVX2, NEON) accumulates in the same fixed lane
// layout and reduces the lanes with the same tree, and none of them uses
// fused multiply-add. The variants are therefore bit-identical, which keeps
// index tie-breaking and training traces reproducible across machines.
//
//   f32 dot: 8 lanes, lane l sums elements i with i % 8 == l over the
//            full blocks; t_j = l_j + l_{j+4}; r = (t0 + t2) + (t1 + t3);
//            tail elements are then added in order.
//   f64 dot: 4 lanes; r = (l0 + l2) + (l1 + l3); tail added in order.

#include <cstddef>

namespace geovec::simd {

struct KernelTable {
  const char* name;
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  // out[r] = dot_f32(rows + r * dim, q, dim) for r in [0, n_rows)
  void (*dot_rows_f32)(const float* rows, std::size_t n_rows, std::size_t dim,
                       const float* q, float* out);
  // y[r] = dot_f64(w + r * cols, x, cols) for r in [0, rows)
  void (*matvec_f64)(const double* w, std::size_t rows, std::size_t cols,
                     const double* x, double* y);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled for this target or the CPU
// lacks the instructions.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Best available table. GEOVEC_SIMD=scalar forces the reference kernels.
const KernelTable& active_kernels();

inline float dot(const float* a, const float* b, std::size_t n) {
  return active_kernels().dot_f32(a, b, n);
}
inline double dot(const double* a, const double* b, std::size_t n) {
  return active_kernels().dot_f64(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active_kernels().axpy_f64(alpha, x, y, n);
}

}  // namespace geovec::simd
