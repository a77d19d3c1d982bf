// SPDX-License-Identifier: Apache-2.0
#include "transact/store.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"

#include "transact/errors.hpp"

namespace transact {

using nlohmann::json;

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

json event_json(const ActionEvent& e) {
  return {{"user_id", e.user_id},     {"pin_id", e.pin_id},           {"action_type", e.action_type},
          {"timestamp", e.timestamp}, {"pin_embedding", e.pin_embedding}, {"source_id", e.source_id},
          {"cluster_id", e.cluster_id}};
}

ActionEvent event_from_json(const json& j) {
  ActionEvent e;
  e.user_id = j.at("user_id").get<std::int64_t>();
  e.pin_id = j.at("pin_id").get<std::int64_t>();
  e.action_type = j.at("action_type").get<int>();
  e.timestamp = j.at("timestamp").get<std::int64_t>();
  e.pin_embedding = j.at("pin_embedding").get<std::vector<double>>();
  e.source_id = j.value("source_id", std::string());
  e.cluster_id = j.value("cluster_id", 0);
  return e;
}

}  // namespace

void StoreConfig::validate() const {
  if (capacity < 1) throw ConfigError("store capacity must be >= 1");
  if (dedup_bucket_seconds < 1) throw ConfigError("dedup bucket must be >= 1 second");
  if (d_pin < 1) throw ConfigError("store d_pin must be >= 1");
  if (shards < 1) throw ConfigError("store needs at least one shard");
}

SequenceStore::SequenceStore(StoreConfig config) : config_(config) {
  config_.validate();
  for (std::size_t i = 0; i < config_.shards; ++i) shards_.push_back(std::make_unique<Shard>());
}

SequenceStore::SequenceStore(SequenceStore&& o) noexcept
    : config_(o.config_), shards_(std::move(o.shards_)), stats_(std::move(o.stats_)) {}

SequenceStore& SequenceStore::operator=(SequenceStore&& o) noexcept {
  config_ = o.config_;
  shards_ = std::move(o.shards_);
  stats_ = std::move(o.stats_);
  return *this;
}

SequenceStore::~SequenceStore() = default;

SequenceStore::Shard& SequenceStore::shard_for(std::int64_t user_id) const {
  const auto h = static_cast<std::uint64_t>(user_id) * 0x9E3779B97F4A7C15ull;
  return *shards_[(h >> 32) % shards_.size()];
}

SequenceStore::Key SequenceStore::key_of(const UserAction& a) const {
  return {a.pin_id, a.action_type, floor_div(a.timestamp, config_.dedup_bucket_seconds)};
}

IngestResult SequenceStore::ingest(const ActionEvent& e) {
  auto reject = [&](const char* reason) {
    std::lock_guard lk(stats_mu_);
    ++stats_.rejected[reason];
    return IngestResult{IngestStatus::rejected, reason};
  };
  if (e.action_type < 0 || static_cast<std::size_t>(e.action_type) >= config_.n_action_types) {
    return reject("unknown_action_type");
  }
  if (e.pin_embedding.size() != config_.d_pin) return reject("embedding_width");
  if (e.timestamp < 0) return reject("negative_timestamp");

  Stored s{UserAction{e.timestamp, e.action_type, e.pin_embedding, e.pin_id, e.cluster_id}, e.source_id};
  const Key key = key_of(s.action);
  bool evicted = false;
  {
    Shard& sh = shard_for(e.user_id);
    std::unique_lock lk(sh.mu);
    UserBuffer& buf = sh.users[e.user_id];
    if (buf.keys.count(key)) {
      std::lock_guard sl(stats_mu_);
      ++stats_.duplicates;
      return {IngestStatus::duplicate, {}};
    }
    auto pos = std::upper_bound(buf.events.begin(), buf.events.end(), s,
                                [](const Stored& a, const Stored& b) { return more_recent(a.action, b.action); });
    buf.events.insert(pos, std::move(s));
    buf.keys.insert(key);
    if (buf.events.size() > config_.capacity) {
      buf.keys.erase(key_of(buf.events.back().action));
      buf.events.pop_back();
      evicted = true;
    }
  }
  std::lock_guard sl(stats_mu_);
  ++stats_.accepted;
  if (evicted) ++stats_.evicted;
  return {IngestStatus::accepted, {}};
}

UserSequence SequenceStore::fetch(std::int64_t user_id, std::int64_t t_request, std::size_t max_len) const {
  if (t_request < 0) throw ContractError("fetch: t_request must be >= 0");
  if (max_len < 1) throw ContractError("fetch: max_len must be >= 1");
  UserSequence seq;
  seq.max_len = max_len;
  const Shard& sh = shard_for(user_id);
  std::shared_lock lk(sh.mu);
  auto it = sh.users.find(user_id);
  if (it == sh.users.end()) return seq;
  const auto& ev = it->second.events;
  auto first = std::find_if(ev.begin(), ev.end(), [&](const Stored& s) { return s.action.timestamp <= t_request; });
  for (; first != ev.end() && seq.entries.size() < max_len; ++first) seq.entries.push_back(first->action);
  return seq;
}

std::vector<std::int64_t> SequenceStore::user_ids() const {
  std::vector<std::int64_t> ids;
  for (const auto& sh : shards_) {
    std::shared_lock lk(sh->mu);
    for (const auto& [id, buf] : sh->users) {
      if (!buf.events.empty()) ids.push_back(id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::size_t SequenceStore::event_count() const {
  std::size_t n = 0;
  for (const auto& sh : shards_) {
    std::shared_lock lk(sh->mu);
    for (const auto& [id, buf] : sh->users) n += buf.events.size();
  }
  return n;
}

IngestStats SequenceStore::stats() const {
  std::lock_guard lk(stats_mu_);
  return stats_;
}

std::string SequenceStore::serialize() const {
  std::ostringstream os;
  json header = {{"schema", "transact.store"},
                 {"version", kStoreSchemaVersion},
                 {"capacity", config_.capacity},
                 {"dedup_bucket_seconds", config_.dedup_bucket_seconds},
                 {"d_pin", config_.d_pin},
                 {"n_action_types", config_.n_action_types},
                 {"shards", config_.shards}};
  os << header.dump() << '\n';
  for (std::int64_t id : user_ids()) {
    const Shard& sh = shard_for(id);
    std::shared_lock lk(sh.mu);
    json events = json::array();
    for (const auto& s : sh.users.at(id).events) {
      const auto& a = s.action;
      events.push_back({a.timestamp, a.action_type, a.pin_id, a.cluster_id, s.source_id, a.pin_embedding});
    }
    os << json{{"user_id", id}, {"events", std::move(events)}}.dump() << '\n';
  }
  return os.str();
}

void SequenceStore::snapshot(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write snapshot '" + path + "'");
  f << serialize();
  if (!f) throw IoError("failed writing snapshot '" + path + "'");
}

SequenceStore SequenceStore::deserialize(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw RestoreError("snapshot is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw RestoreError(std::string("snapshot header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("schema", "") != "transact.store") {
    throw RestoreError("snapshot header does not name the store schema");
  }
  const int version = header.value("version", -1);
  if (version != kStoreSchemaVersion) {
    throw RestoreError("snapshot schema version " + std::to_string(version) + " != supported " +
                       std::to_string(kStoreSchemaVersion));
  }
  SequenceStore store;
  try {
    StoreConfig c;
    c.capacity = header.at("capacity").get<std::size_t>();
    c.dedup_bucket_seconds = header.at("dedup_bucket_seconds").get<std::int64_t>();
    c.d_pin = header.at("d_pin").get<std::size_t>();
    c.n_action_types = header.at("n_action_types").get<std::size_t>();
    c.shards = header.at("shards").get<std::size_t>();
    store = SequenceStore(c);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      const auto uid = j.at("user_id").get<std::int64_t>();
      Shard& sh = store.shard_for(uid);
      UserBuffer& buf = sh.users[uid];
      for (const auto& ev : j.at("events")) {
        Stored s{UserAction{ev.at(0).get<std::int64_t>(), ev.at(1).get<int>(), ev.at(5).get<std::vector<double>>(),
                            ev.at(2).get<std::int64_t>(), ev.at(3).get<int>()},
                 ev.at(4).get<std::string>()};
        if (s.action.pin_embedding.size() != c.d_pin) {
          throw RestoreError("snapshot line " + std::to_string(lineno) + ": embedding width mismatch");
        }
        if (!buf.events.empty() && more_recent(s.action, buf.events.back().action)) {
          throw RestoreError("snapshot line " + std::to_string(lineno) + ": events out of order");
        }
        buf.keys.insert(store.key_of(s.action));
        buf.events.push_back(std::move(s));
      }
      if (buf.events.size() > c.capacity) {
        throw RestoreError("snapshot line " + std::to_string(lineno) + ": user exceeds capacity");
      }
    }
  } catch (const json::exception& e) {
    throw RestoreError(std::string("corrupt snapshot record: ") + e.what());
  } catch (const ConfigError& e) {
    throw RestoreError(std::string("snapshot header: ") + e.what());
  }
  return store;
}

SequenceStore SequenceStore::restore(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RestoreError("cannot open snapshot '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::vector<ActionEvent> read_action_events(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open event file '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw ContractError("event file '" + path + "' is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw ContractError("event file '" + path + "' lacks a schema header");
  }
  if (header.value("schema", "") != "transact.actions" || header.value("version", -1) != kActionsSchemaVersion) {
    throw ContractError("event file '" + path + "' has an unsupported schema header");
  }
  std::vector<ActionEvent> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(event_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ContractError("event file '" + path + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_action_events(const std::string& path, const std::vector<ActionEvent>& events) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write event file '" + path + "'");
  f << json{{"schema", "transact.actions"}, {"version", kActionsSchemaVersion}}.dump() << '\n';
  for (const auto& e : events) f << event_json(e).dump() << '\n';
  if (!f) throw IoError("failed writing event file '" + path + "'");
}

}  // namespace transact
