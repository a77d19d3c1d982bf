// SPDX-License-Identifier: Apache-2.0
#pragma once

// In-process realtime feature store: validates and deduplicates action
// events and keeps each user's most recent `capacity` actions for
// point-in-time sequence fetches.
//
// Users are sharded over a fixed number of shards, each guarded by a
// shared mutex: any number of concurrent fetches, one writer per shard.

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "transact/sequence.hpp"

namespace transact {

inline constexpr int kStoreSchemaVersion = 1;
inline constexpr int kActionsSchemaVersion = 1;

struct ActionEvent {
  std::int64_t user_id = 0;
  std::int64_t pin_id = 0;
  int action_type = 0;
  std::int64_t timestamp = 0;
  std::vector<double> pin_embedding;
  std::string source_id;
  int cluster_id = 0;

  friend bool operator==(const ActionEvent&, const ActionEvent&) = default;
};

struct StoreConfig {
  std::size_t capacity = 200;
  std::int64_t dedup_bucket_seconds = 1;
  std::size_t d_pin = 32;
  std::size_t n_action_types = 4;
  std::size_t shards = 16;

  void validate() const;
};

enum class IngestStatus { accepted, duplicate, rejected };

struct IngestResult {
  IngestStatus status = IngestStatus::accepted;
  /// Failed rule for rejections: unknown_action_type, embedding_width,
  /// negative_timestamp.
  std::string reason;
};

struct IngestStats {
  std::size_t accepted = 0, duplicates = 0, evicted = 0;
  std::map<std::string, std::size_t> rejected;
};

class SequenceStore {
 public:
  explicit SequenceStore(StoreConfig config = {});
  SequenceStore(SequenceStore&&) noexcept;
  SequenceStore& operator=(SequenceStore&&) noexcept;
  ~SequenceStore();

  const StoreConfig& config() const noexcept { return config_; }

  IngestResult ingest(const ActionEvent& event);

  /// Most recent max_len retained actions at or before t_request, newest
  /// first. Unknown users give an all-pad sequence.
  UserSequence fetch(std::int64_t user_id, std::int64_t t_request, std::size_t max_len) const;

  std::vector<std::int64_t> user_ids() const;
  std::size_t event_count() const;
  IngestStats stats() const;

  /// Line-delimited snapshot text (header line then one line per user in
  /// ascending user id).
  std::string serialize() const;
  void snapshot(const std::string& path) const;
  /// Throws RestoreError on a bad header, version or record.
  static SequenceStore restore(const std::string& path);
  static SequenceStore deserialize(const std::string& text);

 private:
  struct Stored {
    UserAction action;
    std::string source_id;
  };
  using Key = std::tuple<std::int64_t, int, std::int64_t>;  // pin, type, bucket
  struct UserBuffer {
    std::vector<Stored> events;  // more_recent order
    std::set<Key> keys;
  };
  struct Shard {
    mutable std::shared_mutex mu;
    std::unordered_map<std::int64_t, UserBuffer> users;
  };

  Shard& shard_for(std::int64_t user_id) const;
  Key key_of(const UserAction& a) const;

  StoreConfig config_;
  std::vector<std::unique_ptr<Shard>> shards_;
  mutable std::mutex stats_mu_;
  IngestStats stats_;
};

/// Reads an event replay file (header line with schema version, then one
/// event per line). Throws IoError / ContractError.
std::vector<ActionEvent> read_action_events(const std::string& path);
void write_action_events(const std::string& path, const std::vector<ActionEvent>& events);

}  // namespace transact
