// SPDX-License-Identifier: Apache-2.0
#include "transact/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "transact/errors.hpp"

namespace transact {

namespace {

enum : std::uint64_t { kInitStream = 11, kRunStream = 12, kEpochStream = 1ull << 32 };

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be > 0");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (warmup_steps > total_steps) throw ConfigError("warmup_steps must not exceed total_steps");
  if (min_lr < 0.0 || min_lr > peak_lr) throw ConfigError("min_lr must lie in [0, peak_lr]");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be > 0");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (smoothing < 1) throw ConfigError("smoothing must be >= 1");
}

double lr_schedule(std::size_t step, const TrainConfig& c) {
  if (step >= c.total_steps) return c.min_lr;
  if (step < c.warmup_steps) return c.peak_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  const double span = static_cast<double>(c.total_steps - c.warmup_steps);
  const double progress = static_cast<double>(step - c.warmup_steps) / span;
  const double lr = c.peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
  return std::max(lr, c.min_lr);
}

void adam_update(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, std::size_t t,
                 const TrainConfig& c) {
  std::vector<Tensor*> p, m, v;
  std::vector<const Tensor*> g;
  for_each_param(params, [&](const std::string&, Tensor& x) { p.push_back(&x); });
  for_each_param(grads, [&](const std::string&, const Tensor& x) { g.push_back(&x); });
  for_each_param(state.m, [&](const std::string&, Tensor& x) { m.push_back(&x); });
  for_each_param(state.v, [&](const std::string&, Tensor& x) { v.push_back(&x); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ContractError("adam_update: parameter structures differ");
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < p.size(); ++i) {
    double* x = p[i]->data();
    const double* gr = g[i]->data();
    double* mm = m[i]->data();
    double* vv = v[i]->data();
    for (std::size_t j = 0; j < p[i]->size(); ++j) {
      mm[j] = c.beta1 * mm[j] + (1.0 - c.beta1) * gr[j];
      vv[j] = c.beta2 * vv[j] + (1.0 - c.beta2) * gr[j] * gr[j];
      x[j] -= lr * (mm[j] / bc1) / (std::sqrt(vv[j] / bc2) + c.eps);
    }
  }
}

TrainState init_state(const ModelConfig& model, const TrainConfig& train) {
  model.validate();
  train.validate();
  TrainState s;
  s.model = model;
  s.train = train;
  std::mt19937_64 init_rng(derive_seed(train.seed, kInitStream));
  s.params = init_params(model, init_rng);
  s.adam.m = zeros_like(s.params);
  s.adam.v = zeros_like(s.params);
  s.rng.seed(derive_seed(train.seed, kRunStream));
  return s;
}

std::vector<std::size_t> batch_indices(std::size_t step, std::size_t batch_size, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("batch_indices: empty dataset");
  std::vector<std::size_t> out(batch_size);
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::size_t g = step * batch_size + j;
    const std::size_t epoch = g / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(derive_seed(seed, kEpochStream + epoch));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out[j] = perm[g % n];
  }
  return out;
}

namespace {

double clip_gradients(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  for_each_param(grads, [&](const std::string&, const Tensor& t) {
    for (double v : t.flat()) sq += v * v;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for_each_param(grads, [&](const std::string&, Tensor& t) {
      for (double& v : t.flat()) v *= s;
    });
  }
  return norm;
}

}  // namespace

std::vector<TraceRow> train_steps(TrainState& state, const ExampleSource& data, const EvalHook& eval,
                                  std::optional<std::size_t> stop_at) {
  const auto& tc = state.train;
  const std::size_t end = std::min(stop_at.value_or(tc.total_steps), tc.total_steps);
  if (data.size() == 0) throw TrainingError("training set is empty");
  std::vector<TraceRow> trace;
  std::deque<double> window;
  double window_sum = 0.0;
  ModelParams grads = zeros_like(state.params);
  std::vector<TrainingExample> batch(tc.batch_size);
  while (state.step < end) {
    const auto idx = batch_indices(state.step, tc.batch_size, data.size(), tc.seed);
    for (std::size_t j = 0; j < idx.size(); ++j) batch[j] = data.get(idx[j]);
    for_each_param(grads, [](const std::string&, Tensor& t) { t.fill(0.0); });
    const double loss = loss_and_gradients(batch, state.params, state.model, state.rng, grads);
    if (!std::isfinite(loss)) {
      std::string ids;
      for (std::size_t j = 0; j < std::min<std::size_t>(batch.size(), 8); ++j) {
        ids += " (" + std::to_string(batch[j].user_id) + "," + std::to_string(batch[j].pin_id) + ")";
      }
      throw TrainingError("non-finite loss at step " + std::to_string(state.step) + "; first batch ids:" + ids);
    }
    clip_gradients(grads, tc.grad_clip);
    const double lr = lr_schedule(state.step, tc);
    adam_update(state.params, grads, state.adam, lr, state.step + 1, tc);
    ++state.step;

    window.push_back(loss);
    window_sum += loss;
    if (window.size() > tc.smoothing) {
      window_sum -= window.front();
      window.pop_front();
    }
    TraceRow row{state.step, lr, loss, window_sum / static_cast<double>(window.size()), {}};
    if (eval && tc.eval_every > 0 && (state.step % tc.eval_every == 0 || state.step == tc.total_steps)) {
      row.eval_hit = eval(state);
    }
    trace.push_back(std::move(row));
  }
  return trace;
}

TrainResult train(const ModelConfig& model, const TrainConfig& config, const ExampleSource& data,
                  const EvalHook& eval) {
  TrainResult r{init_state(model, config), {}};
  r.trace = train_steps(r.state, data, eval);
  return r;
}

TrainResult retrain_from_scratch(const ModelConfig& model, TrainConfig config, const ExampleSource& fresh,
                                 std::uint64_t new_seed, const EvalHook& eval) {
  config.seed = new_seed;
  return train(model, config, fresh, eval);
}

void write_trace_tsv(std::ostream& os, const std::vector<TraceRow>& trace, const std::vector<std::string>& heads) {
  os.precision(10);
  os << "step\tlr\tloss\tsmoothed_loss";
  for (const auto& h : heads) os << "\teval_hit_" << h;
  os << '\n';
  for (const auto& r : trace) {
    os << r.step << '\t' << r.lr << '\t' << r.loss << '\t' << r.smoothed;
    for (std::size_t h = 0; h < heads.size(); ++h) {
      os << '\t';
      if (h < r.eval_hit.size()) os << r.eval_hit[h];
    }
    os << '\n';
  }
}

std::vector<Chunk> score_chunks(const ModelParams& params, const ModelConfig& config, const Corpus& corpus,
                                std::span<const ExampleRecord> records, std::size_t batch) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> slot;
  std::vector<Chunk> chunks;
  // Inference consumes the rng only for the random compression modes.
  std::mt19937_64 rng(0);
  std::vector<TrainingExample> xs;
  std::vector<std::size_t> owner;
  auto flush = [&]() {
    if (xs.empty()) return;
    const Tensor p = forward_batch(xs, params, config, false, rng);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ChunkItem item;
      item.pin_id = xs[i].pin_id;
      item.labels = xs[i].labels;
      item.probs.assign(p.row(i).begin(), p.row(i).end());
      item.cluster_id = xs[i].candidate_cluster;
      chunks[owner[i]].items.push_back(std::move(item));
    }
    xs.clear();
    owner.clear();
  };
  for (const auto& r : records) {
    auto [it, inserted] = slot.emplace(std::make_pair(r.user_id, r.chunk_id), chunks.size());
    if (inserted) chunks.push_back(Chunk{r.user_id, r.chunk_id, {}});
    xs.push_back(materialize(corpus, r, config.max_len));
    owner.push_back(it->second);
    if (xs.size() >= batch) flush();
  }
  flush();
  return chunks;
}

std::vector<std::int64_t> non_core_users(const Corpus& corpus) {
  std::vector<std::int64_t> out;
  for (const auto& u : corpus.users) {
    if (u.non_core) out.push_back(u.id);
  }
  return out;
}

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& config, const Corpus& corpus,
                          std::span<const ExampleRecord> records, std::size_t K) {
  const auto chunks = score_chunks(params, config, corpus, records);
  return evaluate_chunks(chunks, config.heads.names, config.heads.utilities, K, non_core_users(corpus));
}

}  // namespace transact
