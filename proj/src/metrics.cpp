// SPDX-License-Identifier: Apache-2.0
#include "transact/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

#include "transact/errors.hpp"

namespace transact {

double final_score(std::span<const double> probs, std::span<const double> utilities) {
  if (probs.size() != utilities.size()) throw ContractError("final_score: probs and utilities differ in length");
  double s = 0.0;
  for (std::size_t h = 0; h < probs.size(); ++h) s += utilities[h] * probs[h];
  return s;
}

std::vector<std::size_t> top_k(const Chunk& chunk, std::span<const double> utilities, std::size_t K) {
  if (K < 1) throw ContractError("top_k: K must be >= 1");
  std::vector<double> score(chunk.items.size());
  for (std::size_t i = 0; i < score.size(); ++i) score[i] = final_score(chunk.items[i].probs, utilities);
  std::vector<std::size_t> idx(chunk.items.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t k = std::min(K, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (score[a] != score[b]) return score[a] > score[b];
                      return chunk.items[a].pin_id < chunk.items[b].pin_id;
                    });
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> chunk_hits(const Chunk& chunk, std::span<const double> utilities, std::size_t K) {
  std::vector<std::size_t> beta(utilities.size(), 0);
  for (std::size_t i : top_k(chunk, utilities, K)) {
    const auto& y = chunk.items[i].labels;
    if (y.size() != utilities.size()) throw ContractError("chunk_hits: label count does not match head count");
    for (std::size_t h = 0; h < y.size(); ++h) beta[h] += y[h] ? 1 : 0;
  }
  return beta;
}

namespace {

struct Totals {
  std::vector<double> sum;
  std::size_t users = 0, chunks = 0;
};

Totals totals(std::span<const Chunk> chunks, std::span<const double> utilities, std::size_t K) {
  if (chunks.empty()) throw UndefinedMetricError("HIT@K over an empty evaluation set");
  std::set<std::pair<std::int64_t, std::int64_t>> keys;
  std::set<std::int64_t> users;
  Totals t;
  t.sum.assign(utilities.size(), 0.0);
  for (const auto& c : chunks) {
    if (!keys.emplace(c.user_id, c.chunk_id).second) {
      throw ContractError("duplicate chunk (user " + std::to_string(c.user_id) + ", chunk " +
                          std::to_string(c.chunk_id) + ")");
    }
    users.insert(c.user_id);
    const auto beta = chunk_hits(c, utilities, K);
    for (std::size_t h = 0; h < beta.size(); ++h) t.sum[h] += static_cast<double>(beta[h]);
  }
  t.users = users.size();
  t.chunks = chunks.size();
  return t;
}

}  // namespace

std::vector<double> aggregate_hit(std::span<const Chunk> chunks, std::span<const double> utilities, std::size_t K) {
  auto t = totals(chunks, utilities, K);
  for (auto& v : t.sum) v /= static_cast<double>(t.users);
  return t.sum;
}

std::vector<double> aggregate_hit_per_chunk(std::span<const Chunk> chunks, std::span<const double> utilities,
                                            std::size_t K) {
  auto t = totals(chunks, utilities, K);
  for (auto& v : t.sum) v /= static_cast<double>(t.chunks);
  return t.sum;
}

double impression_diversity(const std::map<std::int64_t, std::vector<int>>& shown_clusters) {
  if (shown_clusters.empty()) throw UndefinedMetricError("diversity over an empty user set");
  double total = 0.0;
  for (const auto& [user, clusters] : shown_clusters) {
    total += static_cast<double>(std::set<int>(clusters.begin(), clusters.end()).size());
  }
  return total / static_cast<double>(shown_clusters.size());
}

double impression_diversity(std::span<const Chunk> chunks, std::span<const double> utilities, std::size_t K) {
  std::map<std::int64_t, std::vector<int>> shown;
  for (const auto& c : chunks) {
    auto& v = shown[c.user_id];
    for (std::size_t i : top_k(c, utilities, K)) v.push_back(c.items[i].cluster_id);
  }
  return impression_diversity(shown);
}

namespace {

HitSummary summarize(std::span<const Chunk> chunks, std::span<const double> utilities, std::size_t K) {
  HitSummary s;
  const auto t = totals(chunks, utilities, K);
  s.users = t.users;
  s.chunks = t.chunks;
  for (const auto& c : chunks) s.items += c.items.size();
  s.hit = t.sum;
  s.hit_per_chunk = t.sum;
  for (auto& v : s.hit) v /= static_cast<double>(t.users);
  for (auto& v : s.hit_per_chunk) v /= static_cast<double>(t.chunks);
  s.diversity = impression_diversity(chunks, utilities, K);
  return s;
}

}  // namespace

EvalReport evaluate_chunks(std::span<const Chunk> chunks, const std::vector<std::string>& heads,
                           std::span<const double> utilities, std::size_t K,
                           const std::vector<std::int64_t>& non_core_users) {
  if (heads.size() != utilities.size()) throw ContractError("evaluate_chunks: one utility per head is required");
  EvalReport r;
  r.heads = heads;
  r.K = K;
  r.all = summarize(chunks, utilities, K);
  if (!non_core_users.empty()) {
    const std::set<std::int64_t> nc(non_core_users.begin(), non_core_users.end());
    std::vector<Chunk> subset;
    for (const auto& c : chunks) {
      if (nc.count(c.user_id)) subset.push_back(c);
    }
    if (!subset.empty()) r.non_core = summarize(subset, utilities, K);
  }
  return r;
}

double relative_pct(double a, double b) {
  if (b == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (a - b) / b * 100.0;
}

void relative_to(EvalReport& report, const EvalReport& base) {
  if (report.heads != base.heads) throw ContractError("relative_to: head lists differ");
  std::vector<double> d(report.heads.size());
  for (std::size_t h = 0; h < d.size(); ++h) d[h] = relative_pct(report.all.hit[h], base.all.hit[h]);
  report.hit_delta_pct = d;
  report.diversity_delta_pct = relative_pct(report.all.diversity, base.all.diversity);
}

namespace {

void summary_rows(std::ostream& os, const std::string& scope, const EvalReport& r, const HitSummary& s,
                  bool with_delta) {
  for (std::size_t h = 0; h < r.heads.size(); ++h) {
    os << scope << "\tHIT@" << r.K << "/" << r.heads[h] << '\t' << s.hit[h] << '\t' << s.hit_per_chunk[h] << '\t';
    if (with_delta && r.hit_delta_pct) os << (*r.hit_delta_pct)[h];
    os << '\n';
  }
  os << scope << "\tdiversity\t" << s.diversity << "\t\t";
  if (with_delta && r.diversity_delta_pct) os << *r.diversity_delta_pct;
  os << '\n';
  os << scope << "\tusers\t" << s.users << "\t\t\n";
  os << scope << "\tchunks\t" << s.chunks << "\t\t\n";
  os << scope << "\titems\t" << s.items << "\t\t\n";
}

nlohmann::json summary_json(const EvalReport& r, const HitSummary& s) {
  nlohmann::json j;
  for (std::size_t h = 0; h < r.heads.size(); ++h) {
    j["hit"][r.heads[h]] = s.hit[h];
    j["hit_per_chunk"][r.heads[h]] = s.hit_per_chunk[h];
  }
  j["diversity"] = s.diversity;
  j["users"] = s.users;
  j["chunks"] = s.chunks;
  j["items"] = s.items;
  return j;
}

}  // namespace

void write_report_tsv(std::ostream& os, const EvalReport& r) {
  os.precision(10);
  os << "scope\tmetric\tvalue\tper_chunk\tdelta_pct\n";
  summary_rows(os, "all", r, r.all, true);
  if (r.non_core) summary_rows(os, "non_core", r, *r.non_core, false);
}

void write_report_jsonl(std::ostream& os, const EvalReport& r) {
  nlohmann::json j;
  j["record"] = "eval";
  j["K"] = r.K;
  j["all"] = summary_json(r, r.all);
  if (r.non_core) j["non_core"] = summary_json(r, *r.non_core);
  if (r.hit_delta_pct) {
    for (std::size_t h = 0; h < r.heads.size(); ++h) j["hit_delta_pct"][r.heads[h]] = (*r.hit_delta_pct)[h];
  }
  if (r.diversity_delta_pct) j["diversity_delta_pct"] = *r.diversity_delta_pct;
  os << j.dump() << '\n';
}

}  // namespace transact
