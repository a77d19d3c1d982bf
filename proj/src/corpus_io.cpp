// SPDX-License-Identifier: Apache-2.0
#include "transact/corpus_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "transact/errors.hpp"
#include "transact/store.hpp"

namespace transact {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& p, const std::string& schema, json extra = json::object()) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write '" + p.string() + "'");
  extra["schema"] = schema;
  extra["version"] = kCorpusFilesVersion;
  f << extra.dump() << '\n';
  return f;
}

template <class Fn>
json read_jsonl(const fs::path& p, const std::string& schema, Fn&& on_record) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  std::string line;
  if (!std::getline(f, line)) throw ContractError("'" + p.string() + "' is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception&) {
    throw ContractError("'" + p.string() + "' lacks a JSON schema header");
  }
  if (header.value("schema", "") != schema || header.value("version", -1) != kCorpusFilesVersion) {
    throw ContractError("'" + p.string() + "' has schema header " + header.dump() + ", expected " + schema + " v" +
                        std::to_string(kCorpusFilesVersion));
  }
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      on_record(json::parse(line));
    } catch (const json::exception& e) {
      throw ContractError("'" + p.string() + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return header;
}

void write_examples(const fs::path& p, const std::vector<ExampleRecord>& rs, const char* split) {
  auto f = open_out(p, "transact.examples", {{"split", split}});
  for (const auto& r : rs) {
    f << json{{"user_id", r.user_id},     {"pin_id", r.pin_id}, {"chunk_id", r.chunk_id},
              {"t_request", r.t_request}, {"labels", r.labels}, {"base_rate", r.base_rate}}
             .dump()
      << '\n';
  }
  if (!f) throw IoError("failed writing '" + p.string() + "'");
}

std::vector<ExampleRecord> read_examples(const fs::path& p) {
  std::vector<ExampleRecord> out;
  read_jsonl(p, "transact.examples", [&](const json& j) {
    ExampleRecord r;
    r.user_id = j.at("user_id").get<std::int64_t>();
    r.pin_id = j.at("pin_id").get<std::int64_t>();
    r.chunk_id = j.at("chunk_id").get<std::int64_t>();
    r.t_request = j.at("t_request").get<std::int64_t>();
    r.labels = j.at("labels").get<std::vector<std::uint8_t>>();
    r.base_rate = j.value("base_rate", 0.0);
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace

std::vector<ActionEvent> corpus_events(const Corpus& corpus) {
  std::vector<ActionEvent> out;
  for (std::size_t u = 0; u < corpus.histories.size(); ++u) {
    for (const auto& a : corpus.histories[u]) {
      out.push_back({static_cast<std::int64_t>(u), a.pin_id, a.action_type, a.timestamp, a.pin_embedding, "synthetic",
                     a.cluster_id});
    }
  }
  return out;
}

void write_corpus(const std::string& dir, const Corpus& corpus) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory '" + dir + "': " + ec.message());
  const fs::path root(dir);
  {
    auto f = open_out(root / "pins.jsonl", "transact.pins", {{"d_pin", corpus.d_pin}});
    for (const auto& p : corpus.pins) {
      f << json{{"pin_id", p.id}, {"cluster_id", p.cluster}, {"embedding", p.embedding}}.dump() << '\n';
    }
  }
  {
    auto f = open_out(root / "users.jsonl", "transact.users", {{"d_user", corpus.d_user}});
    for (const auto& u : corpus.users) {
      f << json{{"user_id", u.id},
                {"state", u.attrs.state},
                {"gender", u.attrs.gender},
                {"location", u.attrs.location},
                {"batch_embedding", u.batch_embedding},
                {"other_features", u.other_features},
                {"non_core", u.non_core}}
               .dump()
        << '\n';
    }
  }
  write_action_events((root / "actions.jsonl").string(), corpus_events(corpus));
  write_examples(root / "train.jsonl", corpus.train, "train");
  write_examples(root / "eval.jsonl", corpus.eval, "eval");
}

Corpus read_corpus(const std::string& dir) {
  const fs::path root(dir);
  Corpus c;
  const json ph = read_jsonl(root / "pins.jsonl", "transact.pins", [&](const json& j) {
    c.pins.push_back({j.at("pin_id").get<std::int64_t>(), j.at("embedding").get<std::vector<double>>(),
                      j.at("cluster_id").get<int>()});
  });
  c.d_pin = ph.value("d_pin", std::size_t{0});
  const json uh = read_jsonl(root / "users.jsonl", "transact.users", [&](const json& j) {
    UserRecord u;
    u.id = j.at("user_id").get<std::int64_t>();
    u.attrs = {j.at("state").get<std::string>(), j.at("gender").get<std::string>(), j.at("location").get<std::string>()};
    u.batch_embedding = j.at("batch_embedding").get<std::vector<double>>();
    u.other_features = j.at("other_features").get<std::vector<double>>();
    u.non_core = j.at("non_core").get<bool>();
    c.users.push_back(std::move(u));
  });
  c.d_user = uh.value("d_user", std::size_t{0});
  std::sort(c.pins.begin(), c.pins.end(), [](const PinRecord& a, const PinRecord& b) { return a.id < b.id; });
  std::sort(c.users.begin(), c.users.end(), [](const UserRecord& a, const UserRecord& b) { return a.id < b.id; });

  c.histories.assign(c.users.size(), {});
  for (auto& e : read_action_events((root / "actions.jsonl").string())) {
    if (e.user_id < 0 || static_cast<std::size_t>(e.user_id) >= c.users.size()) {
      throw ContractError("action for unknown user " + std::to_string(e.user_id));
    }
    c.histories[static_cast<std::size_t>(e.user_id)].push_back(
        UserAction{e.timestamp, e.action_type, std::move(e.pin_embedding), e.pin_id, e.cluster_id});
  }
  for (auto& h : c.histories) {
    std::stable_sort(h.begin(), h.end(), [](const UserAction& a, const UserAction& b) { return a.timestamp < b.timestamp; });
  }
  c.train = read_examples(root / "train.jsonl");
  c.eval = read_examples(root / "eval.jsonl");
  c.validate();
  return c;
}

}  // namespace transact
