// SPDX-License-Identifier: Apache-2.0
#include "transact/compression.hpp"

#include <algorithm>
#include <string>

#include "transact/errors.hpp"

namespace transact {

CompressionMode parse_compression(std::string_view s) {
  for (auto m : kAllCompressionModes) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown compression mode '" + std::string(s) + "'");
}

std::string_view to_string(CompressionMode m) {
  switch (m) {
    case CompressionMode::random_col: return "random_col";
    case CompressionMode::first_col: return "first_col";
    case CompressionMode::random_K: return "random_K";
    case CompressionMode::first_K: return "first_K";
    case CompressionMode::all_cols: return "all_cols";
    case CompressionMode::max_pool: return "max_pool";
    case CompressionMode::first_K_plus_max: return "first_K_plus_max";
    case CompressionMode::all_plus_max: return "all_plus_max";
  }
  return "?";
}

std::string_view size_formula(CompressionMode m) {
  switch (m) {
    case CompressionMode::random_col:
    case CompressionMode::first_col:
    case CompressionMode::max_pool: return "d";
    case CompressionMode::random_K:
    case CompressionMode::first_K: return "Kd";
    case CompressionMode::all_cols: return "|S|d";
    case CompressionMode::first_K_plus_max: return "(K+1)d";
    case CompressionMode::all_plus_max: return "(|S|+1)d";
  }
  return "?";
}

std::size_t compressed_size(CompressionMode mode, std::size_t K, std::size_t rows, std::size_t d) noexcept {
  switch (mode) {
    case CompressionMode::random_col:
    case CompressionMode::first_col:
    case CompressionMode::max_pool: return d;
    case CompressionMode::random_K:
    case CompressionMode::first_K: return K * d;
    case CompressionMode::all_cols: return rows * d;
    case CompressionMode::first_K_plus_max: return (K + 1) * d;
    case CompressionMode::all_plus_max: return (rows + 1) * d;
  }
  return 0;
}

namespace {

bool uses_k(CompressionMode m) {
  return m == CompressionMode::random_K || m == CompressionMode::first_K || m == CompressionMode::first_K_plus_max;
}

bool has_max(CompressionMode m) {
  return m == CompressionMode::max_pool || m == CompressionMode::first_K_plus_max ||
         m == CompressionMode::all_plus_max;
}

std::vector<std::size_t> sample_rows(const Mask& exclude, std::size_t rows, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!exclude[r]) pool.push_back(r);
  }
  // Partial Fisher-Yates.
  const std::size_t take = std::min(count, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  pool.resize(count, kNoRow);
  return pool;
}

}  // namespace

std::vector<double> compress_variant(const OutputView& o, CompressionMode mode, std::size_t K, const Mask& exclude,
                                     std::mt19937_64& rng, CompressionTrace* trace) {
  if (exclude.size() != o.rows) throw ContractError("compress: mask size does not match rows");
  if (uses_k(mode) && (K < 1 || K > o.rows)) {
    throw ConfigError("compression K=" + std::to_string(K) + " out of range [1, " + std::to_string(o.rows) + "]");
  }
  std::vector<std::size_t> blocks;
  switch (mode) {
    case CompressionMode::random_col: blocks = sample_rows(exclude, o.rows, 1, rng); break;
    case CompressionMode::first_col: blocks = {0}; break;
    case CompressionMode::random_K: blocks = sample_rows(exclude, o.rows, K, rng); break;
    case CompressionMode::first_K:
    case CompressionMode::first_K_plus_max:
      for (std::size_t r = 0; r < K; ++r) blocks.push_back(r);
      break;
    case CompressionMode::all_cols:
    case CompressionMode::all_plus_max:
      for (std::size_t r = 0; r < o.rows; ++r) blocks.push_back(r);
      break;
    case CompressionMode::max_pool: break;
  }

  const std::size_t d = o.d;
  std::vector<double> z((blocks.size() + (has_max(mode) ? 1 : 0)) * d, 0.0);
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    if (blocks[bi] == kNoRow) continue;
    auto src = o.row(blocks[bi]);
    std::copy(src.begin(), src.end(), z.begin() + static_cast<std::ptrdiff_t>(bi * d));
  }
  std::vector<std::size_t> argmax;
  if (has_max(mode)) {
    argmax.assign(d, kNoRow);
    double* mx = z.data() + blocks.size() * d;
    for (std::size_t r = 0; r < o.rows; ++r) {
      if (exclude[r]) continue;
      auto row = o.row(r);
      for (std::size_t j = 0; j < d; ++j) {
        if (argmax[j] == kNoRow || row[j] > mx[j]) {
          mx[j] = row[j];
          argmax[j] = r;
        }
      }
    }
  }
  if (trace) {
    trace->blocks = std::move(blocks);
    trace->argmax = std::move(argmax);
  }
  return z;
}

std::vector<double> compress_output(const OutputView& o, std::size_t K, const Mask& exclude, CompressionTrace* trace) {
  std::mt19937_64 unused(0);
  return compress_variant(o, CompressionMode::first_K_plus_max, K, exclude, unused, trace);
}

void compress_backward(const CompressionTrace& trace, std::span<const double> dz, std::size_t d, double* d_o) {
  for (std::size_t bi = 0; bi < trace.blocks.size(); ++bi) {
    const std::size_t r = trace.blocks[bi];
    if (r == kNoRow) continue;
    for (std::size_t j = 0; j < d; ++j) d_o[r * d + j] += dz[bi * d + j];
  }
  if (!trace.argmax.empty()) {
    const std::size_t base = trace.blocks.size() * d;
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t r = trace.argmax[j];
      if (r != kNoRow) d_o[r * d + j] += dz[base + j];
    }
  }
}

}  // namespace transact
