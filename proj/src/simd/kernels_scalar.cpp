#include "geovec/simd/kernels.hpp"

namespace geovec::simd {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  }
  const float t0 = lane[0] + lane[4];
  const float t1 = lane[1] + lane[5];
  const float t2 = lane[2] + lane[6];
  const float t3 = lane[3] + lane[7];
  float r = (t0 + t2) + (t1 + t3);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int l = 0; l < 4; ++l) lane[l] += a[i + l] * b[i + l];
  }
  double r = (lane[0] + lane[2]) + (lane[1] + lane[3]);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
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

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", dot_f32, dot_f64, axpy_f64,
                                 dot_rows_f32, matvec_f64};
  return table;
}

}  // namespace geovec::simd
