// SPDX-License-Identifier: Apache-2.0
#pragma once

// Mini-batch Adam training with linear warmup and cosine decay, plus the
// chunk scorer used for evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "transact/metrics.hpp"
#include "transact/model.hpp"
#include "transact/synth.hpp"

namespace transact {

struct TrainConfig {
  std::size_t batch_size = 256;
  double peak_lr = 0.0048;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 2000;
  double min_lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global-norm clip; 0 disables.
  double grad_clip = 0.0;
  std::uint64_t seed = 1;
  /// Run the eval callback every this many steps; 0 disables.
  std::size_t eval_every = 0;
  std::size_t smoothing = 20;

  void validate() const;
};

/// Linear 0 -> peak over warmup, then cosine to min_lr; min_lr past total.
double lr_schedule(std::size_t step, const TrainConfig& config);

struct AdamState {
  ModelParams m, v;
};

/// One Adam step with learning rate `lr`; `t` is the 1-based update count.
void adam_update(ModelParams& params, const ModelParams& grads, AdamState& state, double lr, std::size_t t,
                 const TrainConfig& config);

/// Source of training examples by index.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual TrainingExample get(std::size_t i) const = 0;
};

class CorpusSource final : public ExampleSource {
 public:
  CorpusSource(const Corpus& corpus, std::span<const ExampleRecord> records, std::size_t max_len)
      : corpus_(corpus), records_(records), max_len_(max_len) {}
  std::size_t size() const override { return records_.size(); }
  TrainingExample get(std::size_t i) const override { return materialize(corpus_, records_[i], max_len_); }

 private:
  const Corpus& corpus_;
  std::span<const ExampleRecord> records_;
  std::size_t max_len_;
};

class VectorSource final : public ExampleSource {
 public:
  explicit VectorSource(std::span<const TrainingExample> examples) : examples_(examples) {}
  std::size_t size() const override { return examples_.size(); }
  TrainingExample get(std::size_t i) const override { return examples_[i]; }

 private:
  std::span<const TrainingExample> examples_;
};

struct TrainState {
  ModelConfig model;
  TrainConfig train;
  ModelParams params;
  AdamState adam;
  std::size_t step = 0;
  /// Drives time-window sampling, dropout and random compression.
  std::mt19937_64 rng;
};

struct TraceRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double smoothed = 0.0;
  /// Empty unless an eval ran at this step.
  std::vector<double> eval_hit;
};

using EvalHook = std::function<std::vector<double>(const TrainState&)>;

/// Fresh parameters and optimizer state from train.seed.
TrainState init_state(const ModelConfig& model, const TrainConfig& train);

/// Batch indices of step `step` (epoch permutations seeded by (seed, epoch)).
std::vector<std::size_t> batch_indices(std::size_t step, std::size_t batch_size, std::size_t n, std::uint64_t seed);

/// Runs from state.step up to `stop_at` (default total_steps). Throws
/// TrainingError on a non-finite loss.
std::vector<TraceRow> train_steps(TrainState& state, const ExampleSource& data, const EvalHook& eval = nullptr,
                                  std::optional<std::size_t> stop_at = std::nullopt);

struct TrainResult {
  TrainState state;
  std::vector<TraceRow> trace;
};

TrainResult train(const ModelConfig& model, const TrainConfig& config, const ExampleSource& data,
                  const EvalHook& eval = nullptr);

/// New init with `new_seed` and the full schedule; nothing carried over.
TrainResult retrain_from_scratch(const ModelConfig& model, TrainConfig config, const ExampleSource& fresh,
                                 std::uint64_t new_seed, const EvalHook& eval = nullptr);

void write_trace_tsv(std::ostream& os, const std::vector<TraceRow>& trace, const std::vector<std::string>& heads);

/// Scores every eval record (in inference mode) and groups them into
/// chunks by (user, chunk id).
std::vector<Chunk> score_chunks(const ModelParams& params, const ModelConfig& config, const Corpus& corpus,
                                std::span<const ExampleRecord> records, std::size_t batch = 512);

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& config, const Corpus& corpus,
                          std::span<const ExampleRecord> records, std::size_t K = 3);

/// Non-core user ids of a corpus.
std::vector<std::int64_t> non_core_users(const Corpus& corpus);

}  // namespace transact
