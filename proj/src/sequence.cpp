// SPDX-License-Identifier: Apache-2.0
#include "transact/sequence.hpp"

#include <algorithm>
#include <unordered_set>

#include "transact/errors.hpp"

namespace transact {

ActionVocabulary::ActionVocabulary(std::vector<ActionType> types) : types_(std::move(types)) {
  if (types_.empty()) throw ConfigError("action vocabulary is empty");
  std::unordered_set<std::string> names;
  for (std::size_t i = 0; i < types_.size(); ++i) {
    if (types_[i].id != static_cast<int>(i)) throw ConfigError("action type ids must be dense from 0");
    if (!names.insert(types_[i].name).second) throw ConfigError("duplicate action type '" + types_[i].name + "'");
  }
}

ActionVocabulary ActionVocabulary::standard() {
  return ActionVocabulary({{action::kView, "view", Polarity::neutral},
                           {action::kClick, "click", Polarity::positive},
                           {action::kRepin, "repin", Polarity::positive},
                           {action::kHide, "hide", Polarity::negative}});
}

const ActionType& ActionVocabulary::at(int id) const {
  if (!is_real(id)) throw LookupError("unknown action type id " + std::to_string(id));
  return types_[static_cast<std::size_t>(id)];
}

int ActionVocabulary::id_of(std::string_view name) const {
  for (const auto& t : types_) {
    if (t.name == name) return t.id;
  }
  throw LookupError("unknown action type '" + std::string(name) + "'");
}

bool more_recent(const UserAction& a, const UserAction& b) noexcept {
  if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
  if (a.pin_id != b.pin_id) return a.pin_id > b.pin_id;
  return a.action_type > b.action_type;
}

Mask UserSequence::pad_mask() const {
  Mask m(max_len, 1);
  std::fill_n(m.begin(), std::min(entries.size(), max_len), std::uint8_t{0});
  return m;
}

UserSequence build_sequence(std::span<const UserAction> history, std::int64_t t_request, std::size_t max_len) {
  if (max_len == 0) throw ContractError("build_sequence: max_len must be >= 1");
  for (const auto& a : history) {
    if (a.timestamp > t_request) {
      throw FutureEventError("action at t=" + std::to_string(a.timestamp) + " is after t_request=" +
                             std::to_string(t_request));
    }
  }
  UserSequence seq;
  seq.max_len = max_len;
  seq.entries.assign(history.begin(), history.end());
  const std::size_t keep = std::min(max_len, seq.entries.size());
  std::partial_sort(seq.entries.begin(), seq.entries.begin() + static_cast<std::ptrdiff_t>(keep),
                    seq.entries.end(), more_recent);
  seq.entries.resize(keep);
  return seq;
}

EncodedSequence encode_sequence(const UserSequence& seq, const Tensor& action_table, std::size_t d_pin) {
  const std::size_t d_action = action_table.cols();
  const std::size_t width = d_action + d_pin;
  EncodedSequence out;
  out.matrix = Tensor({seq.max_len, width});
  out.pad_mask = seq.pad_mask();
  out.time_mask.assign(seq.max_len, 0);
  for (std::size_t i = 0; i < seq.entries.size(); ++i) {
    const auto& a = seq.entries[i];
    // The last table row is PAD and never addressed by a real action.
    if (a.action_type < 0 || static_cast<std::size_t>(a.action_type) + 1 >= action_table.rows()) {
      throw LookupError("encode_sequence: action type " + std::to_string(a.action_type) +
                        " not covered by table with " + std::to_string(action_table.rows()) + " rows");
    }
    if (a.pin_embedding.size() != d_pin) {
      throw ContractError("encode_sequence: pin embedding width " + std::to_string(a.pin_embedding.size()) +
                          " != " + std::to_string(d_pin));
    }
    auto row = out.matrix.row(i);
    auto emb = action_table.row(static_cast<std::size_t>(a.action_type));
    std::copy(emb.begin(), emb.end(), row.begin());
    std::copy(a.pin_embedding.begin(), a.pin_embedding.end(), row.begin() + static_cast<std::ptrdiff_t>(d_action));
  }
  return out;
}

FusionMode parse_fusion(std::string_view s) {
  if (s == "concat") return FusionMode::concat;
  if (s == "append") return FusionMode::append;
  throw ConfigError("unknown fusion mode '" + std::string(s) + "'");
}

std::string_view to_string(FusionMode m) { return m == FusionMode::concat ? "concat" : "append"; }

std::size_t fused_width(FusionMode mode, std::size_t d_action, std::size_t d_pin) noexcept {
  return mode == FusionMode::concat ? d_action + 2 * d_pin : d_action + d_pin;
}

std::size_t fused_rows(FusionMode mode, std::size_t max_len) noexcept {
  return mode == FusionMode::concat ? max_len : max_len + 1;
}

EncodedSequence early_fuse(const EncodedSequence& encoded, std::span<const double> candidate_emb, FusionMode mode) {
  const std::size_t rows = encoded.rows();
  const std::size_t width = encoded.matrix.cols();
  const std::size_t d_pin = candidate_emb.size();
  if (d_pin > width) throw ContractError("early_fuse: candidate wider than encoded rows");
  EncodedSequence out;
  if (mode == FusionMode::concat) {
    out.matrix = Tensor({rows, width + d_pin});
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = encoded.matrix.row(r);
      auto dst = out.matrix.row(r);
      std::copy(src.begin(), src.end(), dst.begin());
      std::copy(candidate_emb.begin(), candidate_emb.end(), dst.begin() + static_cast<std::ptrdiff_t>(width));
    }
    out.pad_mask = encoded.pad_mask;
    out.time_mask = encoded.time_mask;
  } else {
    out.matrix = Tensor({rows + 1, width});
    std::copy(encoded.matrix.data(), encoded.matrix.data() + encoded.matrix.size(), out.matrix.data());
    auto last = out.matrix.row(rows);
    std::copy(candidate_emb.begin(), candidate_emb.end(), last.begin() + static_cast<std::ptrdiff_t>(width - d_pin));
    out.pad_mask = encoded.pad_mask;
    out.pad_mask.push_back(0);
    out.time_mask = encoded.time_mask;
    out.time_mask.push_back(0);
  }
  return out;
}

Mask build_time_window_mask(const UserSequence& seq, std::int64_t t_request, double window_seconds, bool training) {
  if (window_seconds < 0.0) throw ConfigError("time window must be non-negative");
  Mask m(seq.max_len, 0);
  if (!training) return m;
  const double lo = static_cast<double>(t_request) - window_seconds;
  for (std::size_t i = 0; i < seq.entries.size(); ++i) {
    const auto ts = static_cast<double>(seq.entries[i].timestamp);
    if (ts > lo && ts < static_cast<double>(t_request)) m[i] = 1;
  }
  return m;
}

double sample_time_window(std::mt19937_64& rng, double window_max) {
  return std::uniform_real_distribution<double>(0.0, window_max)(rng);
}

Mask combine_masks(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw ContractError("combine_masks: size mismatch");
  Mask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

}  // namespace transact
