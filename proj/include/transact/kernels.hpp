// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense double-precision inner loops used by every layer.
//
// Each backend provides the same table of function pointers. `scalar` is the
// reference implementation; the SIMD backends must agree with it to within
// floating-point reassociation (they use FMA and wider accumulators, so
// results are not bitwise equal). The active backend is chosen once at first
// use from CPU features and can be pinned with TRANSACT_KERNELS=scalar|avx2|neon
// or programmatically via select_backend().
//
// All matrices are row-major with an explicit leading dimension. GEMM
// variants accumulate into C (C += op(A) * op(B)); callers zero C first when
// they want a plain product.

#include <cstddef>
#include <string_view>
#include <vector>

namespace transact::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend b);

struct KernelTable {
  Backend backend;

  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = x * y elementwise
  void (*mul)(const double* x, double* y, std::size_t n);

  // C[M,N] += A[M,K] * B[K,N]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc);
  // C[M,N] += A[M,K] * B[N,K]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc);
  // C[M,N] += A[K,M]^T * B[K,N]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda,
                  const double* b, std::size_t ldb,
                  double* c, std::size_t ldc);
};

const KernelTable& scalar_table();
/// nullptr when the backend was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// Backends usable on this machine, scalar first.
std::vector<Backend> available_backends();

const KernelTable& table_for(Backend b);

/// The table every layer calls through.
const KernelTable& active();

/// Pins the active backend. Throws ConfigError if unavailable. Not thread
/// safe with concurrent kernel use; call during startup or in tests.
void select_backend(Backend b);

}  // namespace transact::kernels
