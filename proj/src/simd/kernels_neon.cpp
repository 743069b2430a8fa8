// AArch64 only. Uses separate multiply and add so results match the
// scalar reference bit for bit.

#include "geovec/simd/kernels.hpp"

#include <arm_neon.h>

namespace geovec::simd {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float32x4_t lo = vdupq_n_f32(0.0f);  // lanes 0..3
  float32x4_t hi = vdupq_n_f32(0.0f);  // lanes 4..7
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = vaddq_f32(lo, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    hi = vaddq_f32(hi, vmulq_f32(vld1q_f32(a + i + 4), vld1q_f32(b + i + 4)));
  }
  const float32x4_t t = vaddq_f32(lo, hi);
  const float32x2_t u = vadd_f32(vget_low_f32(t), vget_high_f32(t));
  float r = vget_lane_f32(u, 0) + vget_lane_f32(u, 1);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  const float64x2_t s = vaddq_f64(lo, hi);
  double r = vgetq_lane_f64(s, 0) + vgetq_lane_f64(s, 1);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void dot_rows_f32(const float* rows, std::size_t n_rows, std::size_t dim,
                  const float* q, float* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_f32(rows + r * dim, q, dim);
}

void matvec_f64(const double* w, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_f64(w + r * cols, x, cols);
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{"neon", dot_f32, dot_f64, axpy_f64,
                                 dot_rows_f32, matvec_f64};
  return &table;
}

}  // namespace geovec::simd
