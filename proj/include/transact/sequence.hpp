// SPDX-License-Identifier: Apache-2.0
#pragma once

// Realtime user action sequence: construction from raw history, action-type
// and content encoding, early fusion with the ranking candidate, and the
// masks the encoder consumes.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "transact/tensor.hpp"

namespace transact {

enum class Polarity { positive, negative, neutral };

struct ActionType {
  int id = 0;
  std::string name;
  Polarity polarity = Polarity::neutral;
};

/// Real action types occupy ids [0, size()); the PAD id is size().
class ActionVocabulary {
 public:
  explicit ActionVocabulary(std::vector<ActionType> types);
  /// view, click, repin, hide.
  static ActionVocabulary standard();

  std::size_t size() const noexcept { return types_.size(); }
  int pad_id() const noexcept { return static_cast<int>(types_.size()); }
  /// Rows an embedding table needs (real types + PAD).
  std::size_t table_rows() const noexcept { return types_.size() + 1; }
  bool is_real(int id) const noexcept { return id >= 0 && id < static_cast<int>(types_.size()); }
  const ActionType& at(int id) const;
  int id_of(std::string_view name) const;
  const std::vector<ActionType>& types() const noexcept { return types_; }

 private:
  std::vector<ActionType> types_;
};

namespace action {
inline constexpr int kView = 0;
inline constexpr int kClick = 1;
inline constexpr int kRepin = 2;
inline constexpr int kHide = 3;
}  // namespace action

struct UserAction {
  std::int64_t timestamp = 0;
  int action_type = 0;
  std::vector<double> pin_embedding;
  std::int64_t pin_id = 0;
  int cluster_id = 0;

  friend bool operator==(const UserAction&, const UserAction&) = default;
};

/// Strict weak order: newer first; ties by descending pin_id, then
/// descending action type.
bool more_recent(const UserAction& a, const UserAction& b) noexcept;

/// `entries` holds the real actions, newest first; slots
/// [entries.size(), max_len) are padding.
struct UserSequence {
  std::vector<UserAction> entries;
  std::size_t max_len = 0;

  std::size_t real_count() const noexcept { return entries.size(); }
  Mask pad_mask() const;

  friend bool operator==(const UserSequence&, const UserSequence&) = default;
};

/// Keeps the max_len most recent actions. Throws FutureEventError if any
/// action is newer than t_request, ContractError if max_len == 0.
UserSequence build_sequence(std::span<const UserAction> history, std::int64_t t_request, std::size_t max_len);

struct EncodedSequence {
  Tensor matrix;  // rows x width
  Mask pad_mask;
  Mask time_mask;

  std::size_t rows() const noexcept { return matrix.rows(); }
};

/// Row i = [action_table[type_i] | pin_embedding_i]; PAD rows are zero.
/// Throws LookupError for an action id not covered by the table.
EncodedSequence encode_sequence(const UserSequence& seq, const Tensor& action_table, std::size_t d_pin);

enum class FusionMode { concat, append };
FusionMode parse_fusion(std::string_view s);
std::string_view to_string(FusionMode m);

/// concat: every row gets the candidate appended (width + d_pin).
/// append: one extra unmasked row [0 | candidate] after the sequence.
EncodedSequence early_fuse(const EncodedSequence& encoded, std::span<const double> candidate_emb, FusionMode mode);

/// Width of a fused row and number of fused rows.
std::size_t fused_width(FusionMode mode, std::size_t d_action, std::size_t d_pin) noexcept;
std::size_t fused_rows(FusionMode mode, std::size_t max_len) noexcept;

constexpr double kSecondsPerHour = 3600.0;
constexpr double kDefaultTimeWindowMax = 24.0 * kSecondsPerHour;

/// Slot i is masked iff training and t_request - window < ts_i < t_request.
/// Pad slots are never set here. Throws ConfigError if window < 0.
Mask build_time_window_mask(const UserSequence& seq, std::int64_t t_request, double window_seconds, bool training);

/// Uniform draw in [0, window_max].
double sample_time_window(std::mt19937_64& rng, double window_max = kDefaultTimeWindowMax);

/// Elementwise OR; sizes must match.
Mask combine_masks(const Mask& a, const Mask& b);

}  // namespace transact
