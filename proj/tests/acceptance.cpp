// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"
#include "transact/compression.hpp"
#include "transact/config.hpp"
#include "transact/encoder.hpp"
#include "transact/experiment.hpp"
#include "transact/metrics.hpp"
#include "transact/model.hpp"
#include "transact/store.hpp"
#include "transact/synth.hpp"
#include "transact/trainer.hpp"

using namespace transact;
using transact::testing::random_tensor;
using transact::testing::random_vector;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome head_weight_exactness() {
  const auto M = LabelWeightMatrix::example_three_head();
  const auto hide = head_weights(std::vector<std::uint8_t>{0, 0, 1}, M);
  const auto repin = head_weights(std::vector<std::uint8_t>{0, 1, 0}, M);
  Outcome o;
  o.pass = hide[1] == 100.0 && hide[0] == 100.0 && hide[2] == 10.0 && repin[2] == 5.0 && repin[0] == 0.0 &&
           repin[1] == 100.0;
  o.detail = fmt("hide-only w_repin=%g w_click=%g; repin-only w_hide=%g w_click=%g", hide[1], hide[0], repin[2], repin[0]);
  return o;
}

// ---------------------------------------------------------------- 2

Outcome loss_reduction() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  std::bernoulli_distribution b(0.5);
  const auto I = LabelWeightMatrix::identity(3);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> p = {u(rng), u(rng), u(rng)};
    const std::vector<std::uint8_t> y = {b(rng), b(rng), b(rng)};
    double ref = 0.0;
    for (int h = 0; h < 3; ++h) {
      const double bce = -(y[h] * std::log(p[h]) + (1 - y[h]) * std::log(1.0 - p[h]));
      ref += y[h] * bce;  // identity M: w_h = y_h
    }
    worst = std::max(worst, std::abs(weighted_loss(p, y, I, 1.0, 0.0) - ref));
  }
  return {worst <= 1e-12, fmt("max |diff| over 1000 pairs = %.3g", worst)};
}

// ---------------------------------------------------------------- 3

GradReport check_layer_norm(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = 12;
  const auto x = random_vector(n, rng, 2.0), g = random_vector(n, rng), b = random_vector(n, rng),
             r = random_vector(n, rng);
  std::vector<double> packed = x;
  packed.insert(packed.end(), g.begin(), g.end());
  packed.insert(packed.end(), b.begin(), b.end());
  auto f = [&](std::span<const double> v) {
    const auto y = layer_norm(v.subspan(0, n), v.subspan(n, n), v.subspan(2 * n, n), 1e-5);
    return std::inner_product(y.begin(), y.end(), r.begin(), 0.0);
  };
  std::vector<double> out(n), grad(3 * n, 0.0);
  const auto st = layer_norm(x, g, b, 1e-5, out);
  std::span<double> gs(grad);
  layer_norm_backward(x, st, g, r, gs.subspan(0, n), gs.subspan(n, n), gs.subspan(2 * n, n));
  return grad_check(f, packed, grad);
}

GradReport check_encoder(std::uint64_t seed, std::size_t layers) {
  testing::EncoderProbe p;
  p.config.n_layers = layers;
  p.config.n_heads = 2;
  p.config.d_model = 6;
  p.config.d_hidden = 5;
  p.config.dropout = 0.0;
  p.config.positional_encoding = layers == 1 ? PositionalEncoding::none : PositionalEncoding::learned;
  p.rows = p.config.rows = 5;
  std::mt19937_64 rng(seed);
  p.params = init_encoder(p.config, rng);
  p.x = random_tensor({2 * p.rows, 6}, rng);
  p.exclude.assign(2 * p.rows, 0);
  p.exclude[4] = p.exclude[6] = 1;
  p.r = random_tensor({2 * p.rows, 6}, rng);
  EncoderCache cache;
  std::mt19937_64 r0(0);
  encoder_forward(p.params, p.config, p.x, p.exclude, p.rows, false, r0, &cache);
  auto grads = zeros_like(p.params);
  const Tensor dx = encoder_backward(p.params, p.config, cache, p.r, grads);
  auto flat = testing::flatten_tensors(p.params);
  auto g = testing::flatten_tensors(grads);
  const std::size_t n_params = flat.size();
  flat.insert(flat.end(), p.x.flat().begin(), p.x.flat().end());
  g.insert(g.end(), dx.flat().begin(), dx.flat().end());
  auto f = [&](std::span<const double> v) {
    auto q = p.params;
    testing::unflatten_tensors(v.subspan(0, n_params), q);
    Tensor x(p.x.shape(), std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(n_params), v.end()));
    return p.loss(q, x);
  };
  return grad_check(f, flat, g);
}

GradReport check_model(std::uint64_t seed, const ModelConfig& c, const std::vector<std::string>& only = {}) {
  std::mt19937_64 rng(seed);
  const auto params = init_params(c, rng);
  const auto batch = testing::random_batch(c, 4, rng);
  auto grads = zeros_like(params);
  std::mt19937_64 r1(seed + 1);
  loss_and_gradients(batch, params, c, r1, grads);
  GradCheckOptions opts;
  if (!only.empty()) {
    std::size_t off = 0;
    for_each_param(params, [&](const std::string& n, const Tensor& t) {
      if (std::find(only.begin(), only.end(), n) != only.end())
        for (std::size_t i = 0; i < t.size(); ++i) opts.indices.push_back(off + i);
      off += t.size();
    });
  }
  auto f = [&](std::span<const double> v) {
    ModelParams q = params;
    unflatten(v, q);
    std::mt19937_64 r(seed + 1);
    return batch_loss(batch, q, c, true, r);
  };
  return grad_check(f, flatten(params), flatten(grads), opts);
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  auto tiny = testing::tiny_model();
  auto dcn_only = tiny;
  dcn_only.features.transact = false;
  std::map<std::string, double> worst;
  bool ok = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const std::vector<std::pair<std::string, GradReport>> reps = {
        {"layer_norm", check_layer_norm(seed)},
        {"attention", check_encoder(seed, 1)},
        {"encoder", check_encoder(seed, 2)},
        {"dcn_cross", check_model(seed, dcn_only, {"cross.w", "cross.b"})},
        {"head_mlp", check_model(seed, dcn_only, {"head.w_hidden", "head.b_hidden", "head.w_out", "head.b_out"})},
        {"end_to_end", check_model(seed, tiny)},
    };
    for (const auto& [name, r] : reps) {
      worst[name] = std::max(worst[name], r.max_rel_err);
      ok = ok && r.passed && r.max_rel_err <= 1e-4;
    }
  }
  const double secs = seconds_since(t0);
  std::string d;
  for (const auto& [k, v] : worst) d += fmt("%s %.1e, ", k.c_str(), v);
  return {ok && secs < 120.0, d + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------- 4

Outcome mask_invariants() {
  bool a = true, b = true, c = true, d = true;
  std::mt19937_64 rng(4);
  auto cfg = testing::tiny_model();
  cfg.time_window_mask = true;
  cfg.encoder.dropout = 0.25;
  const auto batch = testing::random_batch(cfg, 16, rng);
  for (const auto& ex : batch) {
    a = a && build_time_window_mask(ex.sequence, ex.t_request, 0.0, true) == Mask(cfg.max_len, 0);
    b = b && build_time_window_mask(ex.sequence, ex.t_request, 1e9, false) == Mask(cfg.max_len, 0);
  }
  const auto params = init_params(cfg, rng);
  std::mt19937_64 r1(1), r2(777);
  b = b && forward_batch(batch, params, cfg, false, r1) == forward_batch(batch, params, cfg, false, r2);

  double max_leak = 0.0, max_perm = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    EncoderConfig ec;
    ec.d_model = 8;
    ec.n_heads = 2;
    ec.d_hidden = 6;
    ec.dropout = 0.0;
    ec.rows = 7;
    ec.positional_encoding = PositionalEncoding::learned;
    std::mt19937_64 g(seed);
    const auto p = init_encoder(ec, g);
    const Tensor x = random_tensor({7, 8}, g);
    const Mask ex = {0, 1, 0, 0, 1, 1, 0};
    const Tensor y = encoder_forward(p, ec, x, ex, 7, false, g, nullptr);
    Tensor x2 = x;
    for (std::size_t r = 0; r < 7; ++r)
      if (ex[r])
        for (auto& v : x2.row(r)) v = 50.0 * std::normal_distribution<double>()(g);
    const Tensor y2 = encoder_forward(p, ec, x2, ex, 7, false, g, nullptr);
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t k = 0; k < 8; ++k)
        if (!ex[r]) max_leak = std::max(max_leak, std::abs(y(r, k) - y2(r, k)));

    ec.positional_encoding = PositionalEncoding::none;
    std::mt19937_64 g2(seed);
    const auto q = init_encoder(ec, g2);
    const Tensor yq = encoder_forward(q, ec, x, ex, 7, false, g2, nullptr);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g2);
    Tensor xp({7, 8});
    Mask mp(7);
    for (std::size_t i = 0; i < 7; ++i) {
      std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
      mp[i] = ex[perm[i]];
    }
    const Tensor yp = encoder_forward(q, ec, xp, mp, 7, false, g2, nullptr);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t k = 0; k < 8; ++k) max_perm = std::max(max_perm, std::abs(yp(i, k) - yq(perm[i], k)));
  }
  c = max_leak <= 1e-10;
  d = max_perm <= 1e-10;
  return {a && b && c && d, fmt("(a) %s (b) %s (c) leak %.1e (d) perm %.1e", a ? "ok" : "FAIL", b ? "ok" : "FAIL",
                                max_leak, max_perm)};
}

// ---------------------------------------------------------------- 5

Outcome compression_contract() {
  bool ok = compressed_size(CompressionMode::first_K_plus_max, 10, 100, 96) == 1056;
  std::mt19937_64 rng(5);
  EncoderConfig ec;
  ec.d_model = 96;
  ec.n_heads = 2;
  ec.d_hidden = 32;
  ec.dropout = 0.0;
  ec.rows = 100;
  const auto p = init_encoder(ec, rng);
  const Tensor x = random_tensor({100, 96}, rng);
  Mask ex(100, 0);
  for (std::size_t r = 60; r < 100; ++r) ex[r] = 1;
  ex[3] = 1;
  const Tensor o = encoder_forward(p, ec, x, ex, 100, false, rng, nullptr);
  const OutputView v{o.data(), 100, 96};
  const auto z = compress_output(v, 10, ex);
  ok = ok && z.size() == 1056;
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t k = 0; k < 96; ++k) ok = ok && z[r * 96 + k] == o(r, k);
  for (std::size_t k = 0; k < 96; ++k) {
    double m = -INFINITY;
    for (std::size_t r = 0; r < 100; ++r)
      if (!ex[r]) m = std::max(m, o(r, k));
    ok = ok && z[10 * 96 + k] == m;
  }
  const std::map<CompressionMode, std::pair<std::string, std::size_t>> table = {
      {CompressionMode::random_col, {"d", 96}},
      {CompressionMode::first_col, {"d", 96}},
      {CompressionMode::random_K, {"Kd", 960}},
      {CompressionMode::first_K, {"Kd", 960}},
      {CompressionMode::all_cols, {"|S|d", 9600}},
      {CompressionMode::max_pool, {"d", 96}},
      {CompressionMode::first_K_plus_max, {"(K+1)d", 1056}},
      {CompressionMode::all_plus_max, {"(|S|+1)d", 9696}},
  };
  std::size_t modes = 0;
  for (auto m : kAllCompressionModes) {
    const auto out = compress_variant(v, m, 10, ex, rng);
    const auto& [formula, size] = table.at(m);
    ok = ok && out.size() == size && size_formula(m) == formula;
    ++modes;
  }
  return {ok && modes == 8, fmt("z=%zu for K=10 d=96; %zu modes sized d/Kd/|S|d/(K+1)d/(|S|+1)d", z.size(), modes)};
}

// ---------------------------------------------------------------- 6

std::vector<std::size_t> brute_hits(const Chunk& c, const std::vector<double>& u, std::size_t K) {
  std::vector<std::pair<double, std::int64_t>> keyed;
  for (const auto& it : c.items) {
    double s = 0;
    for (std::size_t h = 0; h < u.size(); ++h) s += u[h] * it.probs[h];
    keyed.emplace_back(-s, it.pin_id);
  }
  std::vector<std::size_t> order(c.items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keyed[a] < keyed[b]; });
  std::vector<std::size_t> hits(u.size(), 0);
  for (std::size_t k = 0; k < std::min(K, order.size()); ++k)
    for (std::size_t h = 0; h < u.size(); ++h) hits[h] += c.items[order[k]].labels[h];
  return hits;
}

Outcome hit_oracle() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> n(1, 20), lvl(0, 5);
  std::bernoulli_distribution lab(0.25);
  std::vector<Chunk> chunks;
  std::map<std::int64_t, std::int64_t> next;
  for (int i = 0; i < 1000; ++i) {
    const auto u = static_cast<std::int64_t>(rng() % 200);
    Chunk c{u, next[u]++, {}};
    const int m = n(rng);
    for (int j = 0; j < m; ++j)
      c.items.push_back({static_cast<std::int64_t>(rng() % 5000), {lab(rng), lab(rng), lab(rng)},
                         {lvl(rng) / 5.0, lvl(rng) / 5.0, lvl(rng) / 5.0}, 0});
    chunks.push_back(std::move(c));
  }
  const std::vector<double> u = {1.0, 2.0, -2.0};
  bool ok = true;
  std::vector<double> sum(3, 0.0);
  for (const auto& c : chunks) {
    const auto b = brute_hits(c, u, 3);
    ok = ok && chunk_hits(c, u, 3) == b;
    for (int h = 0; h < 3; ++h) sum[h] += static_cast<double>(b[h]);
  }
  const auto agg = aggregate_hit(chunks, u, 3);
  for (int h = 0; h < 3; ++h) ok = ok && agg[h] == sum[h] / static_cast<double>(next.size());

  Chunk w{0, 0, {}};
  for (int i = 0; i < 6; ++i) w.items.push_back({i, {0, static_cast<std::uint8_t>(i == 0 || i == 3), 0}, {0, 1.0 - 0.1 * i, 0}, 0});
  const auto beta = chunk_hits(w, std::vector<double>{1, 1, 1}, 3)[1];
  ok = ok && beta == 1;
  return {ok, fmt("1000 chunks exact vs brute force; worked example beta=%zu", beta)};
}

// ---------------------------------------------------------------- 7

std::vector<ActionEvent> stream(std::mt19937_64& rng, std::size_t n, bool unique) {
  std::set<std::tuple<std::int64_t, std::int64_t, int, std::int64_t>> seen;
  std::vector<ActionEvent> out;
  while (out.size() < n) {
    ActionEvent e;
    e.user_id = static_cast<std::int64_t>(rng() % 80);
    e.pin_id = static_cast<std::int64_t>(rng() % 400);
    e.action_type = static_cast<int>(rng() % 4);
    e.timestamp = static_cast<std::int64_t>(rng() % 200000);
    if (unique && !seen.insert({e.user_id, e.pin_id, e.action_type, e.timestamp}).second) continue;
    e.pin_embedding = {static_cast<double>(e.pin_id), 0.5};
    e.source_id = "acc";
    out.push_back(std::move(e));
  }
  return out;
}

Outcome ingest_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  StoreConfig sc;
  sc.capacity = 150;
  sc.d_pin = 2;
  std::mt19937_64 rng(7);

  const auto s1 = stream(rng, 10000, false);
  SequenceStore a(sc), b(sc);
  for (const auto& e : s1) a.ingest(e);
  for (const auto& e : s1) b.ingest(e);
  for (const auto& e : s1) b.ingest(e);
  const bool idem = a.serialize() == b.serialize();

  auto s2 = stream(rng, 10000, true);
  SequenceStore c(sc), d(sc);
  for (const auto& e : s2) c.ingest(e);
  std::shuffle(s2.begin(), s2.end(), rng);
  for (const auto& e : s2) d.ingest(e);
  const bool order = c.serialize() == d.serialize();

  bool pit = true;
  for (int rep = 0; rep < 100 && pit; ++rep) {
    const auto s = stream(rng, 10000, true);
    SequenceStore st(sc);
    for (const auto& e : s) st.ingest(e);
    std::map<std::int64_t, std::vector<UserAction>> per_user;
    for (const auto& e : s) per_user[e.user_id].push_back({e.timestamp, e.action_type, e.pin_embedding, e.pin_id, e.cluster_id});
    for (auto& [u, v] : per_user) {
      std::sort(v.begin(), v.end(), more_recent);
      if (v.size() > sc.capacity) v.resize(sc.capacity);
    }
    for (int q = 0; q < 20; ++q) {
      const auto u = static_cast<std::int64_t>(rng() % 85);
      const auto t = static_cast<std::int64_t>(rng() % 210000);
      const std::size_t L = 1 + rng() % 100;
      std::vector<UserAction> want;
      for (const auto& x : per_user[u])
        if (x.timestamp <= t && want.size() < L) want.push_back(x);
      pit = pit && st.fetch(u, t, L).entries == want;
    }
  }

  const auto restored = SequenceStore::deserialize(c.serialize());
  bool snap = restored.serialize() == c.serialize() && restored.user_ids() == c.user_ids();
  for (int q = 0; q < 500; ++q) {
    const auto u = static_cast<std::int64_t>(rng() % 85);
    const auto t = static_cast<std::int64_t>(rng() % 210000);
    snap = snap && restored.fetch(u, t, 30) == c.fetch(u, t, 30);
  }
  const double secs = seconds_since(t0);
  return {idem && order && pit && snap && secs < 60.0,
          fmt("(a) %s (b) %s (c) %s over 100 streams x 10k (d) %s; %.1fs", idem ? "ok" : "FAIL", order ? "ok" : "FAIL",
              pit ? "ok" : "FAIL", snap ? "ok" : "FAIL", secs)};
}

// ---------------------------------------------------------------- 8

Outcome schedule_exactness() {
  TrainConfig c;  // warmup 200, total 2000, peak 0.0048
  c.min_lr = 1e-5;
  const double eps = 1e-9;
  const double left =
      c.peak_lr * (static_cast<double>(c.warmup_steps) - eps) / static_cast<double>(c.warmup_steps);
  const bool ok = lr_schedule(0, c) == 0.0 && lr_schedule(c.warmup_steps, c) == 0.0048 &&
                  lr_schedule(c.total_steps, c) == c.min_lr && std::abs(left - lr_schedule(c.warmup_steps, c)) < 1e-12;
  return {ok, fmt("lr(0)=%g lr(warmup)=%g lr(total)=%g", lr_schedule(0, c), lr_schedule(c.warmup_steps, c),
                  lr_schedule(c.total_steps, c))};
}

// ---------------------------------------------------------------- 9-12

struct SeedRuns {
  EvalReport tx, avg, no_mask, no_tx, no_pf, stale, fresh;
  std::size_t train_examples = 0;
  double compare_seconds = 0.0;  // TransAct and pooling runs only
};

EvalReport run(const RunConfig& base, const Corpus& corpus, const std::function<void(ModelConfig&)>& edit) {
  RunConfig c = base;
  edit(c.model);
  return train_and_evaluate(c, corpus).report;
}

SeedRuns run_seed(std::uint64_t seed) {
  RunConfig base = default_run_config();
  base.seed = seed;
  base.generator.seed = seed;
  base.train.seed = seed;
  const auto world = generate_world(base.generator);
  const auto corpus = generate_corpus(world);
  SeedRuns r;
  r.train_examples = corpus.train.size();
  const auto t0 = std::chrono::steady_clock::now();
  r.tx = run(base, corpus, [](ModelConfig&) {});
  r.avg = run(base, corpus, [](ModelConfig& m) { m.sequence_encoder = SequenceEncoderKind::avg_pool; });
  r.compare_seconds = seconds_since(t0);
  r.no_mask = run(base, corpus, [](ModelConfig& m) { m.time_window_mask = false; });
  r.no_tx = run(base, corpus, [](ModelConfig& m) { m.features.transact = false; });
  r.no_pf = run(base, corpus, [](ModelConfig& m) { m.features.batch_embedding = false; });

  // Longer horizon: the stale model trains on days [7, 21), the fresh one on
  // [21, 35), both are scored on [35, 42).
  GeneratorConfig g = base.generator;
  g.horizon_days = 42;
  g.train_begin_day = 7;
  g.train_end_day = 21;
  g.eval_begin_day = 35;
  g.eval_end_day = 42;
  const auto w2 = generate_world(g);
  const auto old_corpus = generate_corpus(w2);
  SyntheticWorld w3 = w2;
  w3.config.train_begin_day = 21;
  w3.config.train_end_day = 35;
  Corpus new_corpus = old_corpus;
  generate_examples(w3, new_corpus);
  CorpusSource old_src(old_corpus, old_corpus.train, base.model.max_len);
  CorpusSource new_src(new_corpus, new_corpus.train, base.model.max_len);
  const auto stale = train(base.model, base.train, old_src);
  const auto fresh = retrain_from_scratch(base.model, base.train, new_src, derive_seed(seed, 99));
  r.stale = evaluate_model(stale.state.params, base.model, old_corpus, old_corpus.eval, base.eval_K);
  r.fresh = evaluate_model(fresh.state.params, base.model, old_corpus, old_corpus.eval, base.eval_K);
  return r;
}

constexpr std::size_t kRepin = 1, kHide = 2;

}  // namespace

int main() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o, double secs) {
    std::printf("%s  criterion %2d  %-34s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto timed = [&](int id, const char* name, double limit, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = fn();
    const double s = seconds_since(t0);
    if (limit > 0 && s >= limit) {
      o.pass = false;
      o.detail += fmt(" (over the %.0fs budget)", limit);
    }
    report(id, name, o, s);
  };

  timed(1, "head-weight exactness", 1.0, head_weight_exactness);
  timed(2, "loss reduction to multi-head BCE", 5.0, loss_reduction);
  timed(3, "gradient suite", 120.0, gradient_suite);
  timed(4, "mask invariants", 60.0, mask_invariants);
  timed(5, "compression contract", 30.0, compression_contract);
  timed(6, "HIT@K oracle", 30.0, hit_oracle);
  timed(7, "ingest correctness", 60.0, ingest_correctness);
  timed(8, "schedule exactness", 1.0, schedule_exactness);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedRuns> runs;
  for (std::uint64_t seed : {1u, 2u, 3u}) runs.push_back(run_seed(seed));
  const double train_secs = seconds_since(t0);

  {
    int wins = 0;
    double gain = 0.0, secs = 0.0;
    std::string d;
    for (const auto& r : runs) {
      secs += r.compare_seconds;
      const double dr = relative_pct(r.tx.all.hit[kRepin], r.avg.all.hit[kRepin]);
      const bool win = r.tx.all.hit[kRepin] > r.avg.all.hit[kRepin] && r.tx.all.hit[kHide] < r.avg.all.hit[kHide];
      wins += win;
      gain += dr / 3.0;
      d += fmt("repin %+.2f%% hide %+.2f%%; ", dr, relative_pct(r.tx.all.hit[kHide], r.avg.all.hit[kHide]));
    }
    d += fmt("mean repin %+.2f%%, %zu train examples", gain, runs[0].train_examples);
    report(9, "TransAct beats average pooling", {wins == 3 && gain >= 2.0 && secs <= 900.0, d}, secs);
  }
  {
    int wins = 0;
    std::string d;
    for (const auto& r : runs) {
      const double dt = relative_pct(r.no_tx.all.hit[kRepin], r.tx.all.hit[kRepin]);
      const double dp = relative_pct(r.no_pf.all.hit[kRepin], r.tx.all.hit[kRepin]);
      wins += dt < dp;
      d += fmt("TransAct removed %+.2f%% vs PF removed %+.2f%%; ", dt, dp);
    }
    report(10, "hybrid ablation direction", {wins >= 2, d}, 0.0);
  }
  {
    int wins = 0;
    std::string d;
    for (const auto& r : runs) {
      wins += r.fresh.all.hit[kRepin] > r.stale.all.hit[kRepin];
      d += fmt("fresh %.4f vs stale %.4f; ", r.fresh.all.hit[kRepin], r.stale.all.hit[kRepin]);
    }
    report(11, "retraining beats stale checkpoint", {wins >= 2, d}, 0.0);
  }
  {
    double rm = 0, rn = 0, dm = 0, dn = 0;
    for (const auto& r : runs) {
      rm += r.tx.all.hit[kRepin] / 3.0;
      rn += r.no_mask.all.hit[kRepin] / 3.0;
      dm += r.tx.all.diversity / 3.0;
      dn += r.no_mask.all.diversity / 3.0;
    }
    const double drel = relative_pct(rm, rn);
    report(12, "time-window mask tradeoff",
           {dm > dn && std::abs(drel) <= 3.0,
            fmt("diversity %.4f vs %.4f without mask; repin %.4f vs %.4f (%+.2f%%)", dm, dn, rm, rn, drel)},
           0.0);
  }
  std::printf("%d of 12 criteria failed; model training took %.0fs\n", failures, train_secs);
  return failures == 0 ? 0 : 1;
}
