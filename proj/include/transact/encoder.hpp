// SPDX-License-Identifier: Apache-2.0
#pragma once

// Masked post-norm transformer encoder over the fused action sequence.
//
// Layout per layer:
//   a  = MultiHeadAttention(x) with excluded key positions removed from softmax
//   h  = LayerNorm(x + a)
//   y  = LayerNorm(h + Dropout(W2 relu(W1 h + b1) + b2))
// Dropout also applies to the attention probabilities. Rows whose position
// is excluded (padding or time window) are still computed as queries, but
// the final output rows for them are zeroed.
//
// Everything operates on a batch: B sequences of `rows` rows each stacked
// into one [B*rows, d_model] matrix, so the projections and FFN run as single
// GEMMs and only the attention itself loops per sequence.

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "transact/ops.hpp"
#include "transact/sequence.hpp"
#include "transact/tensor.hpp"

namespace transact {

enum class PositionalEncoding { none, sinusoidal, learned, linear_projection };
PositionalEncoding parse_positional_encoding(std::string_view s);
std::string_view to_string(PositionalEncoding p);

struct EncoderConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 1;
  std::size_t d_model = 96;
  std::size_t d_hidden = 32;
  double dropout = 0.1;
  PositionalEncoding positional_encoding = PositionalEncoding::none;
  /// Sequence rows the encoder sees (sizes the learned positional table).
  std::size_t rows = 100;
  double ln_eps = 1e-5;

  /// Throws ConfigError.
  void validate() const;
};

struct EncoderLayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // [d, d] / [d]
  Tensor w1, b1;                          // [d, d_hidden] / [d_hidden]
  Tensor w2, b2;                          // [d_hidden, d] / [d]
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;
  Tensor pos_table;  // [rows, d] when positional_encoding == learned
  Tensor pos_proj;   // [d] when positional_encoding == linear_projection
};

EncoderParams init_encoder(const EncoderConfig& config, std::mt19937_64& rng);
/// Same shapes, all zeros (gradient / optimizer-moment buffers).
EncoderParams zeros_like(const EncoderParams& p);

template <class P, class F>
void for_each_tensor(P& params, const std::string& prefix, F&& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& L = params.layers[l];
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    fn(p + "wq", L.wq); fn(p + "bq", L.bq);
    fn(p + "wk", L.wk); fn(p + "bk", L.bk);
    fn(p + "wv", L.wv); fn(p + "bv", L.bv);
    fn(p + "wo", L.wo); fn(p + "bo", L.bo);
    fn(p + "w1", L.w1); fn(p + "b1", L.b1);
    fn(p + "w2", L.w2); fn(p + "b2", L.b2);
    fn(p + "ln1_gamma", L.ln1_gamma); fn(p + "ln1_beta", L.ln1_beta);
    fn(p + "ln2_gamma", L.ln2_gamma); fn(p + "ln2_beta", L.ln2_beta);
  }
  if (!params.pos_table.empty()) fn(prefix + "pos_table", params.pos_table);
  if (!params.pos_proj.empty()) fn(prefix + "pos_proj", params.pos_proj);
}

/// Forward intermediates kept for the backward pass.
struct EncoderCache {
  struct Layer {
    Tensor x_in, q, k, v;
    std::vector<double> probs;      // [B, heads, rows, rows] post-softmax
    std::vector<double> attn_drop;  // same layout, 0 or 1/(1-p); empty if no dropout
    Tensor ctx, res1, h1, f_pre, f_act, res2;
    std::vector<LayerNormStats> ln1, ln2;
    std::vector<double> ffn_drop;   // [B*rows, d]; empty if no dropout
  };
  std::vector<Layer> layers;
  Tensor x_raw;  // input before positional encoding
  Mask exclude;
  std::size_t batch = 0;
  std::size_t rows = 0;
};

/// `x` is [B*rows, d_model]; `exclude` has B*rows entries. Returns the
/// encoder output with excluded rows zeroed. Dropout draws from `rng` only
/// when `training` is set.
Tensor encoder_forward(const EncoderParams& params, const EncoderConfig& config, const Tensor& x,
                       const Mask& exclude, std::size_t rows, bool training, std::mt19937_64& rng,
                       EncoderCache* cache);

/// Accumulates parameter gradients into `grads` and returns dL/dx.
Tensor encoder_backward(const EncoderParams& params, const EncoderConfig& config, const EncoderCache& cache,
                        const Tensor& d_out, EncoderParams& grads);

/// Single-sequence convenience: excludes pad OR time-masked positions.
Tensor transformer_encode(const EncodedSequence& u, const EncoderParams& params, const EncoderConfig& config,
                          bool training, std::mt19937_64& rng);

/// Fixed sinusoidal table [rows, d].
Tensor sinusoidal_table(std::size_t rows, std::size_t d);

}  // namespace transact
