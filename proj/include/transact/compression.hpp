// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reduction of the encoder output O [rows, d] to a fixed-width vector.

#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "transact/tensor.hpp"

namespace transact {

enum class CompressionMode {
  random_col,
  first_col,
  random_K,
  first_K,
  all_cols,
  max_pool,
  first_K_plus_max,
  all_plus_max,
};

inline constexpr CompressionMode kAllCompressionModes[] = {
    CompressionMode::random_col, CompressionMode::first_col,       CompressionMode::random_K,
    CompressionMode::first_K,    CompressionMode::all_cols,        CompressionMode::max_pool,
    CompressionMode::first_K_plus_max, CompressionMode::all_plus_max,
};

CompressionMode parse_compression(std::string_view s);
std::string_view to_string(CompressionMode m);
/// Human-readable width formula, e.g. "(K+1)d".
std::string_view size_formula(CompressionMode m);

std::size_t compressed_size(CompressionMode mode, std::size_t K, std::size_t rows, std::size_t d) noexcept;

/// Read-only view of one sequence's encoder output.
struct OutputView {
  const double* data;
  std::size_t rows;
  std::size_t d;
  std::span<const double> row(std::size_t r) const { return {data + r * d, d}; }
};

inline constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

/// Which source element produced each output element, for the backward pass.
struct CompressionTrace {
  /// Source row for each copied d-wide block, kNoRow for zero fill.
  std::vector<std::size_t> blocks;
  /// Source row per dimension of the trailing max-pool block; empty if the
  /// mode has no max-pool block, kNoRow entries if every row was excluded.
  std::vector<std::size_t> argmax;
};

/// `exclude` marks rows that must not be read by max pooling or random
/// selection. Random modes draw uniformly without replacement from the
/// non-excluded rows and keep the chosen rows in ascending order. Throws
/// ConfigError if K is out of range for a mode that uses it.
std::vector<double> compress_variant(const OutputView& o, CompressionMode mode, std::size_t K, const Mask& exclude,
                                     std::mt19937_64& rng, CompressionTrace* trace = nullptr);

/// First K rows followed by the per-dimension max over non-excluded rows.
std::vector<double> compress_output(const OutputView& o, std::size_t K, const Mask& exclude,
                                    CompressionTrace* trace = nullptr);

/// Scatters dz back into d_o ([rows, d], accumulated).
void compress_backward(const CompressionTrace& trace, std::span<const double> dz, std::size_t d, double* d_o);

}  // namespace transact
