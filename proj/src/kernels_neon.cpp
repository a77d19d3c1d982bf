// SPDX-License-Identifier: Apache-2.0
// AArch64 NEON variants (float64x2). Advanced SIMD is mandatory on AArch64,
// so the dispatcher enables this table unconditionally there.
#include <arm_neon.h>

#include "transact/kernels.hpp"

namespace transact::kernels {
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void mul_neon(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) y[i] *= x[i];
}

inline void row_update(std::size_t n, std::size_t k, const double* a, std::size_t a_stride,
                       const double* b, std::size_t ldb, double* ci) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    float64x2_t c0 = vld1q_f64(ci + j);
    float64x2_t c1 = vld1q_f64(ci + j + 2);
    float64x2_t c2 = vld1q_f64(ci + j + 4);
    float64x2_t c3 = vld1q_f64(ci + j + 6);
    for (std::size_t p = 0; p < k; ++p) {
      const float64x2_t ap = vdupq_n_f64(a[p * a_stride]);
      const double* bp = b + p * ldb + j;
      c0 = vfmaq_f64(c0, ap, vld1q_f64(bp));
      c1 = vfmaq_f64(c1, ap, vld1q_f64(bp + 2));
      c2 = vfmaq_f64(c2, ap, vld1q_f64(bp + 4));
      c3 = vfmaq_f64(c3, ap, vld1q_f64(bp + 6));
    }
    vst1q_f64(ci + j, c0);
    vst1q_f64(ci + j + 2, c1);
    vst1q_f64(ci + j + 4, c2);
    vst1q_f64(ci + j + 6, c3);
  }
  for (; j < n; ++j) {
    double s = ci[j];
    for (std::size_t p = 0; p < k; ++p) s += a[p * a_stride] * b[p * ldb + j];
    ci[j] = s;
  }
}

void gemm_nn_neon(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) row_update(n, k, a + i * lda, 1, b, ldb, c + i * ldc);
}

void gemm_tn_neon(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) row_update(n, k, a + i, lda, b, ldb, c + i * ldc);
}

void gemm_nt_neon(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot_neon(a + i * lda, b + j * ldb, k);
  }
}

constexpr KernelTable kNeon{
    Backend::neon, dot_neon,     axpy_neon,    mul_neon,
    gemm_nn_neon,  gemm_nt_neon, gemm_tn_neon,
};

}  // namespace

const KernelTable& neon_table_unchecked() { return kNeon; }

}  // namespace transact::kernels
