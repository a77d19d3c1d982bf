// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-head pointwise ranking model. The realtime sequence vector z, the
// batch user embedding, the other user features and the candidate embedding
// are concatenated into x0, crossed once with a full-rank cross layer
//   x1 = x0 * (W x0 + b) + x0
// and fed through a shared ReLU layer into one sigmoid output per head.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "transact/compression.hpp"
#include "transact/encoder.hpp"
#include "transact/sequence.hpp"
#include "transact/tensor.hpp"

namespace transact {

struct HeadSet {
  std::vector<std::string> names;
  /// Final-score weights per head.
  std::vector<double> utilities;

  /// click, repin, hide with all-ones utilities.
  static HeadSet standard();
  std::size_t size() const noexcept { return names.size(); }
  std::size_t index_of(std::string_view name) const;
  void validate() const;
};

/// Row = head, column = action; entries >= 0.
class LabelWeightMatrix {
 public:
  LabelWeightMatrix() = default;
  LabelWeightMatrix(std::size_t n, std::vector<double> values);
  static LabelWeightMatrix identity(std::size_t n);
  /// Rows/cols ordered click, repin, hide.
  static LabelWeightMatrix example_three_head();

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t head, std::size_t act) const noexcept { return values_[head * n_ + act]; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const LabelWeightMatrix&, const LabelWeightMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

/// w_h = sum_a M[h,a] y_a. All-zero labels give `neg_fallback` for every
/// head.
std::vector<double> head_weights(std::span<const std::uint8_t> y, const LabelWeightMatrix& m, double neg_fallback = 1.0);

struct UserAttributes {
  std::string state;
  std::string gender;
  std::string location;
};

struct UserWeightTables {
  std::map<std::string, double> state;
  std::map<std::string, double> gender;
  std::map<std::string, double> location;
};

/// w_state * w_gender * w_location; unknown categories weigh 1.
double user_weight(const UserAttributes& attrs, const UserWeightTables& tables);

inline constexpr double kProbClamp = 1e-7;

/// w_u * sum_h w_h * BCE(f_h, y_h), probabilities clamped to
/// [1e-7, 1 - 1e-7]. Throws DomainError for probabilities outside (0, 1).
double weighted_loss(std::span<const double> probs, std::span<const std::uint8_t> y, const LabelWeightMatrix& m,
                     double user_w, double neg_fallback = 1.0);
double weighted_loss(std::span<const double> probs, std::span<const std::uint8_t> y, const LabelWeightMatrix& m,
                     const UserAttributes& attrs, const UserWeightTables& tables, double neg_fallback = 1.0);

/// x0 * (W xl + b) + xl. W is [n, n].
std::vector<double> dcn_cross(std::span<const double> x0, std::span<const double> xl, const Tensor& w,
                              std::span<const double> b);

struct TrainingExample {
  std::int64_t user_id = 0;
  std::int64_t pin_id = 0;
  std::int64_t chunk_id = 0;
  std::int64_t t_request = 0;
  UserSequence sequence;
  std::vector<double> candidate_embedding;
  int candidate_cluster = 0;
  std::vector<double> batch_user_embedding;
  std::vector<double> other_features;
  std::vector<std::uint8_t> labels;
  UserAttributes user_attrs;
};

enum class SequenceEncoderKind { transformer, avg_pool };
SequenceEncoderKind parse_sequence_encoder(std::string_view s);
std::string_view to_string(SequenceEncoderKind k);

struct FeatureSwitches {
  bool transact = true;
  bool batch_embedding = true;
  bool other = true;
};

struct ModelConfig {
  std::size_t max_len = 100;
  std::size_t d_action = 32;
  std::size_t d_pin = 32;
  std::size_t d_user = 32;
  std::size_t d_other = 8;
  std::size_t n_action_types = 4;
  FusionMode fusion = FusionMode::concat;
  SequenceEncoderKind sequence_encoder = SequenceEncoderKind::transformer;
  CompressionMode compression = CompressionMode::first_K_plus_max;
  std::size_t K = 10;
  /// n_layers, n_heads, d_hidden, dropout, positional_encoding are read from
  /// here; d_model and rows are derived.
  EncoderConfig encoder;
  FeatureSwitches features;
  std::size_t head_hidden = 64;
  bool time_window_mask = true;
  double time_window_max = kDefaultTimeWindowMax;
  HeadSet heads = HeadSet::standard();
  LabelWeightMatrix label_weights = LabelWeightMatrix::example_three_head();
  double neg_fallback = 1.0;
  UserWeightTables user_weights;

  std::size_t d_model() const noexcept { return fused_width(fusion, d_action, d_pin); }
  std::size_t seq_rows() const noexcept { return fused_rows(fusion, max_len); }
  std::size_t z_size() const noexcept;
  std::size_t input_size() const noexcept;
  /// Encoder config with the derived fields filled in.
  EncoderConfig encoder_config() const;
  void validate() const;
};

struct ModelParams {
  Tensor action_table;  // [n_action_types + 1, d_action]; last row (PAD) stays zero
  EncoderParams encoder;
  Tensor w_cross, b_cross;    // [D, D], [D]
  Tensor w_hidden, b_hidden;  // [D, head_hidden]
  Tensor w_out, b_out;        // [head_hidden, |H|]
};

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng);
ModelParams zeros_like(const ModelParams& p);

template <class P, class F>
void for_each_param(P& p, F&& fn) {
  fn(std::string("action_table"), p.action_table);
  for_each_tensor(p.encoder, "encoder.", fn);
  fn(std::string("cross.w"), p.w_cross);
  fn(std::string("cross.b"), p.b_cross);
  fn(std::string("head.w_hidden"), p.w_hidden);
  fn(std::string("head.b_hidden"), p.b_hidden);
  fn(std::string("head.w_out"), p.w_out);
  fn(std::string("head.b_out"), p.b_out);
}

std::size_t parameter_count(const ModelParams& p);
/// Concatenation of every parameter in for_each_param order.
std::vector<double> flatten(const ModelParams& p);
void unflatten(std::span<const double> flat, ModelParams& p);

/// Intermediates of one batched forward pass.
struct ForwardCache {
  std::size_t batch = 0;
  Tensor seq_input;  // [B*rows, d_model]
  EncoderCache encoder;
  Tensor encoder_out;
  std::vector<CompressionTrace> traces;
  std::vector<std::vector<std::uint8_t>> pad_masks;  // per example, avg_pool only
  Tensor x0, cross_pre, x1, hidden_pre, hidden, logits, probs;
};

/// The sequence vector z for one example (the TransAct output, or the
/// average pin embedding for the pooling baseline).
std::vector<double> sequence_vector(const TrainingExample& ex, const ModelParams& params, const ModelConfig& config,
                                    bool training, std::mt19937_64& rng);

/// Head probabilities [B, |H|]. `rng` drives the time window, dropout and
/// random compression modes; with training == false only the random
/// compression modes consume it.
Tensor forward_batch(std::span<const TrainingExample> batch, const ModelParams& params, const ModelConfig& config,
                     bool training, std::mt19937_64& rng, ForwardCache* cache = nullptr);

std::vector<double> forward(const TrainingExample& ex, const ModelParams& params, const ModelConfig& config,
                            bool training, std::mt19937_64& rng);

/// Mean weighted loss over the batch, with gradients accumulated into
/// `grads` (which must have the shapes of `params`).
double loss_and_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                          const ModelConfig& config, std::mt19937_64& rng, ModelParams& grads);

/// Mean weighted loss of a batch without gradients.
double batch_loss(std::span<const TrainingExample> batch, const ModelParams& params, const ModelConfig& config,
                  bool training, std::mt19937_64& rng);

}  // namespace transact
