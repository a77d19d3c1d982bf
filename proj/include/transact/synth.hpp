// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic users, pins and action histories with planted short-term
// interest drift, plus labeled ranking examples drawn from them.
//
// Each user has a long-term mixture over a few favorite clusters, one
// disliked cluster and a short-term active cluster that switches as a
// Poisson process (drift_rate switches per day). Actions come in sessions.
// Labels at a request follow a logistic model on the affinity between the
// candidate and the user's interest at request time, a per-cluster global
// popularity that random-walks day by day, and (for hides) the disliked
// cluster.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "transact/model.hpp"
#include "transact/sequence.hpp"

namespace transact {

inline constexpr int kCorpusSchemaVersion = 1;
inline constexpr std::int64_t kSecondsPerDay = 86400;
/// Width of the synthetic "other user features" block.
inline constexpr std::size_t kOtherFeatureWidth = 8;

struct LabelModel {
  double w_short = 2.0;  // weight of cos(active centroid, pin)
  double w_long = 1.0;   // weight of cos(long-term interest, pin)
  double w_pop = 1.0;    // weight of the cluster popularity trend
  double slope = 2.0;
  double click_bias = -6.0;
  double repin_bias = -7.0;
  double hide_dislike = 4.0;  // weight of cos(disliked centroid, pin)
  double hide_affinity = 1.0; // subtracted affinity term for hides
  double hide_bias = -4.5;
};

struct GeneratorConfig {
  std::size_t n_users = 2500;
  std::size_t n_pins = 4000;
  std::size_t n_clusters = 16;
  std::size_t d_pin = 8;
  std::size_t d_user = 8;
  double min_angle_deg = 30.0;
  double pin_noise = 0.35;
  std::size_t n_favorites = 3;

  std::size_t horizon_days = 28;
  std::size_t actions_min = 150;
  std::size_t actions_max = 300;
  std::size_t session_min = 3;
  std::size_t session_max = 10;
  double drift_rate = 0.05;       // active-cluster switches per day
  double switch_to_favorite = 0.6;
  double short_weight = 0.7;      // share of the active centroid in the interest vector
  double pick_temperature = 8.0;
  double random_exposure = 0.4;
  double dislike_exposure = 0.15;  // share of history drawn from the disliked cluster
  double trend_sigma = 0.3;
  double trend_decay = 0.9;
  double base_sigma = 0.3;
  double pf_noise = 0.3;
  double other_noise = 0.2;
  LabelModel labels;

  std::size_t train_begin_day = 7;
  std::size_t train_end_day = 21;
  std::size_t eval_begin_day = 21;
  std::size_t eval_end_day = 28;
  std::size_t train_requests = 3;
  std::size_t eval_chunks = 3;
  std::size_t chunk_size = 10;
  double candidate_short = 0.3;
  double candidate_long = 0.3;
  double candidate_disliked = 0.15;
  /// Negatives kept per positive in the train split.
  double neg_per_pos = 3.0;
  bool downsample = true;

  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
};

struct PinRecord {
  std::int64_t id = 0;
  std::vector<double> embedding;
  int cluster = 0;
};

/// Generator-side user state; only some of it is visible to the model.
struct UserProfile {
  std::int64_t id = 0;
  UserAttributes attrs;
  std::vector<int> favorites;
  std::vector<double> favorite_weights;
  int disliked = 0;
  std::vector<double> long_term;  // unit norm, d_pin
  double base = 0.0;
  /// Piecewise-constant active cluster: switch_times[i] starts segment i.
  std::vector<std::int64_t> switch_times;
  std::vector<int> active;
};

struct SyntheticWorld {
  GeneratorConfig config;
  std::vector<std::vector<double>> centroids;
  std::vector<PinRecord> pins;
  std::vector<std::vector<int>> cluster_members;
  /// popularity[c][day]
  std::vector<std::vector<double>> popularity;
  std::vector<UserProfile> users;
  std::vector<double> pf_projection;  // [d_user, d_pin]

  int active_cluster(const UserProfile& u, std::int64_t t) const;
  std::vector<double> interest(const UserProfile& u, std::int64_t t) const;
  double popularity_at(int cluster, std::int64_t t) const;
};

/// Deterministic per-stream seed derivation (SplitMix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Throws GenerationError if the clusters cannot be separated.
SyntheticWorld generate_world(const GeneratorConfig& config);

/// One user's full history, ascending by timestamp (strictly increasing).
std::vector<UserAction> generate_history(const SyntheticWorld& world, const UserProfile& user, std::mt19937_64& rng);

struct LabelProbabilities {
  double click = 0, repin = 0, hide = 0;
};
LabelProbabilities label_probabilities(const SyntheticWorld& world, const UserProfile& user, const PinRecord& pin,
                                       std::int64_t t);
/// Sampled (click, repin, hide); a hide clears the other two.
std::vector<std::uint8_t> sample_labels(const LabelProbabilities& p, std::mt19937_64& rng);

struct UserRecord {
  std::int64_t id = 0;
  UserAttributes attrs;
  std::vector<double> batch_embedding;
  std::vector<double> other_features;
  bool non_core = false;
};

struct ExampleRecord {
  std::int64_t user_id = 0;
  std::int64_t pin_id = 0;
  std::int64_t chunk_id = 0;
  std::int64_t t_request = 0;
  std::vector<std::uint8_t> labels;
  /// Generative P(any label) at construction; not part of the model input.
  double base_rate = 0.0;
};

/// Everything needed to materialize model inputs.
struct Corpus {
  std::size_t d_pin = 0;
  std::size_t d_user = 0;
  std::vector<PinRecord> pins;
  std::vector<UserRecord> users;
  /// histories[user_id], ascending by timestamp.
  std::vector<std::vector<UserAction>> histories;
  std::vector<ExampleRecord> train;
  std::vector<ExampleRecord> eval;

  /// Throws ContractError on dangling ids or unsorted histories.
  void validate() const;
};

/// Users, histories and both splits. Throws GenerationError when the train
/// split has no positives or too few negatives for the ratio.
Corpus generate_corpus(const SyntheticWorld& world);

/// Re-draws only the examples for a different set of windows over the same
/// world and histories (e.g. a later training window).
void generate_examples(const SyntheticWorld& world, Corpus& corpus);

/// Builds the model input for one record from the user's history.
TrainingExample materialize(const Corpus& corpus, const ExampleRecord& rec, std::size_t max_len);

struct SplitStats {
  std::size_t examples = 0, positives = 0, negatives = 0;
  std::size_t click = 0, repin = 0, hide = 0;
};
SplitStats split_stats(std::span<const ExampleRecord> records);

}  // namespace transact
