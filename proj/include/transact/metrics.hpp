// SPDX-License-Identifier: Apache-2.0
#pragma once

// Chunk-based offline evaluation: the final score, HIT@K per head and
// impression diversity.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace transact {

struct ChunkItem {
  std::int64_t pin_id = 0;
  std::vector<std::uint8_t> labels;
  std::vector<double> probs;
  int cluster_id = 0;
};

struct Chunk {
  std::int64_t user_id = 0;
  std::int64_t chunk_id = 0;
  std::vector<ChunkItem> items;
};

/// S = sum_h u_h * f_h.
double final_score(std::span<const double> probs, std::span<const double> utilities);

/// Item indices of the top min(K, n) items by S, descending, ties by
/// ascending pin id.
std::vector<std::size_t> top_k(const Chunk& chunk, std::span<const double> utilities, std::size_t K);

/// beta per head: labelled items among the top K.
std::vector<std::size_t> chunk_hits(const Chunk& chunk, std::span<const double> utilities, std::size_t K);

/// sum over users and chunks of beta, divided by the number of users.
/// Throws UndefinedMetricError for an empty set and ContractError for a
/// repeated (user, chunk) key.
std::vector<double> aggregate_hit(std::span<const Chunk> chunks, std::span<const double> utilities, std::size_t K);

/// Same numerator divided by the number of chunks.
std::vector<double> aggregate_hit_per_chunk(std::span<const Chunk> chunks, std::span<const double> utilities,
                                            std::size_t K);

/// Mean over users of the number of distinct clusters shown.
double impression_diversity(const std::map<std::int64_t, std::vector<int>>& shown_clusters);
/// Shown = union of each user's per-chunk top K.
double impression_diversity(std::span<const Chunk> chunks, std::span<const double> utilities, std::size_t K);

struct HitSummary {
  std::vector<double> hit;            // per head, users-normalized
  std::vector<double> hit_per_chunk;  // per head, chunks-normalized
  double diversity = 0.0;
  std::size_t users = 0, chunks = 0, items = 0;
};

struct EvalReport {
  std::vector<std::string> heads;
  std::size_t K = 3;
  HitSummary all;
  std::optional<HitSummary> non_core;
  /// (value - base) / base in percent, per head; set by relative_to().
  std::optional<std::vector<double>> hit_delta_pct;
  std::optional<double> diversity_delta_pct;
};

/// `non_core_users` selects the subset reported separately (may be empty).
EvalReport evaluate_chunks(std::span<const Chunk> chunks, const std::vector<std::string>& heads,
                           std::span<const double> utilities, std::size_t K,
                           const std::vector<std::int64_t>& non_core_users = {});

/// (a - b) / b * 100; NaN when b == 0.
double relative_pct(double a, double b);
void relative_to(EvalReport& report, const EvalReport& base);

/// Header row then one row per (scope, head) plus diversity/count rows.
void write_report_tsv(std::ostream& os, const EvalReport& r);
/// One JSON object per line.
void write_report_jsonl(std::ostream& os, const EvalReport& r);

}  // namespace transact
