// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "transact/errors.hpp"
#include "transact/kernels.hpp"

namespace transact::kernels {

#if defined(TRANSACT_HAVE_AVX2_TU)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(TRANSACT_HAVE_NEON_TU)
const KernelTable& neon_table_unchecked();
#endif

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

const KernelTable* avx2_table() {
#if defined(TRANSACT_HAVE_AVX2_TU)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(TRANSACT_HAVE_NEON_TU)
  return &neon_table_unchecked();
#else
  return nullptr;
#endif
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::scalar};
  if (avx2_table()) out.push_back(Backend::avx2);
  if (neon_table()) out.push_back(Backend::neon);
  return out;
}

const KernelTable& table_for(Backend b) {
  const KernelTable* t = nullptr;
  switch (b) {
    case Backend::scalar: t = &scalar_table(); break;
    case Backend::avx2: t = avx2_table(); break;
    case Backend::neon: t = neon_table(); break;
  }
  if (!t) throw ConfigError("kernel backend '" + std::string(backend_name(b)) + "' unavailable");
  return *t;
}

namespace {

const KernelTable* pick_default() {
  if (const char* env = std::getenv("TRANSACT_KERNELS")) {
    const std::string want(env);
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
      if (want == backend_name(b)) return &table_for(b);
    }
    throw ConfigError("TRANSACT_KERNELS='" + want + "' is not a known backend");
  }
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{pick_default()};
  return s;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void select_backend(Backend b) { slot().store(&table_for(b), std::memory_order_relaxed); }

}  // namespace transact::kernels
