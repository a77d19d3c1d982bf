// SPDX-License-Identifier: Apache-2.0
#include "transact/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "transact/errors.hpp"
#include "transact/kernels.hpp"
#include "transact/ops.hpp"

namespace transact {

HeadSet HeadSet::standard() { return {{"click", "repin", "hide"}, {1.0, 1.0, 1.0}}; }

std::size_t HeadSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw LookupError("unknown head '" + std::string(name) + "'");
}

void HeadSet::validate() const {
  if (names.empty()) throw ConfigError("head set must contain at least one head");
  if (utilities.size() != names.size()) throw ConfigError("one utility per head is required");
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size()) throw ConfigError("head names must be unique");
}

LabelWeightMatrix::LabelWeightMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {
  if (values_.size() != n_ * n_) throw ConfigError("label weight matrix must be square |H| x |H|");
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("label weights must be finite and non-negative");
  }
}

LabelWeightMatrix LabelWeightMatrix::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return {n, std::move(v)};
}

LabelWeightMatrix LabelWeightMatrix::example_three_head() {
  //            click repin hide
  return {3, {100, 0, 100,    // click
              0, 100, 100,    // repin
              1, 5, 10}};     // hide
}

std::vector<double> head_weights(std::span<const std::uint8_t> y, const LabelWeightMatrix& m, double neg_fallback) {
  if (y.size() != m.size()) throw ContractError("head_weights: label length does not match M");
  const bool any = std::any_of(y.begin(), y.end(), [](std::uint8_t v) { return v != 0; });
  std::vector<double> w(m.size(), neg_fallback);
  if (!any) return w;
  for (std::size_t h = 0; h < m.size(); ++h) {
    double s = 0.0;
    for (std::size_t a = 0; a < m.size(); ++a) s += m(h, a) * static_cast<double>(y[a]);
    w[h] = s;
  }
  return w;
}

double user_weight(const UserAttributes& attrs, const UserWeightTables& tables) {
  auto look = [](const std::map<std::string, double>& t, const std::string& key) {
    auto it = t.find(key);
    return it == t.end() ? 1.0 : it->second;
  };
  return look(tables.state, attrs.state) * look(tables.gender, attrs.gender) * look(tables.location, attrs.location);
}

double weighted_loss(std::span<const double> probs, std::span<const std::uint8_t> y, const LabelWeightMatrix& m,
                     double user_w, double neg_fallback) {
  if (probs.size() != y.size()) throw ContractError("weighted_loss: probs and labels differ in length");
  const auto w = head_weights(y, m, neg_fallback);
  double loss = 0.0;
  for (std::size_t h = 0; h < probs.size(); ++h) {
    const double f = probs[h];
    if (std::isnan(f)) return f;  // left for the caller's non-finite check
    if (!(f > 0.0 && f < 1.0)) throw DomainError("weighted_loss: probability " + std::to_string(f) + " outside (0,1)");
    const double fc = std::clamp(f, kProbClamp, 1.0 - kProbClamp);
    const double bce = y[h] ? -std::log(fc) : -std::log1p(-fc);
    loss += w[h] * bce;
  }
  return user_w * loss;
}

double weighted_loss(std::span<const double> probs, std::span<const std::uint8_t> y, const LabelWeightMatrix& m,
                     const UserAttributes& attrs, const UserWeightTables& tables, double neg_fallback) {
  return weighted_loss(probs, y, m, user_weight(attrs, tables), neg_fallback);
}

std::vector<double> dcn_cross(std::span<const double> x0, std::span<const double> xl, const Tensor& w,
                              std::span<const double> b) {
  const std::size_t n = x0.size();
  if (xl.size() != n || b.size() != n || w.rows() != n || w.cols() != n) {
    throw ContractError("dcn_cross: shapes must agree (square W matching input length)");
  }
  std::vector<double> out(n);
  const auto& K = kernels::active();
  for (std::size_t i = 0; i < n; ++i) out[i] = x0[i] * (K.dot(w.data() + i * n, xl.data(), n) + b[i]) + xl[i];
  return out;
}

SequenceEncoderKind parse_sequence_encoder(std::string_view s) {
  if (s == "transformer") return SequenceEncoderKind::transformer;
  if (s == "avg_pool") return SequenceEncoderKind::avg_pool;
  throw ConfigError("unknown sequence encoder '" + std::string(s) + "'");
}

std::string_view to_string(SequenceEncoderKind k) {
  return k == SequenceEncoderKind::transformer ? "transformer" : "avg_pool";
}

std::size_t ModelConfig::z_size() const noexcept {
  if (!features.transact) return 0;
  if (sequence_encoder == SequenceEncoderKind::avg_pool) return d_pin;
  return compressed_size(compression, K, seq_rows(), d_model());
}

std::size_t ModelConfig::input_size() const noexcept {
  return z_size() + (features.batch_embedding ? d_user : 0) + (features.other ? d_other : 0) + d_pin;
}

EncoderConfig ModelConfig::encoder_config() const {
  EncoderConfig e = encoder;
  e.d_model = d_model();
  e.rows = seq_rows();
  return e;
}

void ModelConfig::validate() const {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (d_action < 1 || d_pin < 1) throw ConfigError("embedding widths must be >= 1");
  if (n_action_types < 1) throw ConfigError("n_action_types must be >= 1");
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  if (time_window_max < 0.0) throw ConfigError("time_window_max must be non-negative");
  heads.validate();
  if (label_weights.size() != heads.size()) throw ConfigError("label weight matrix size does not match head count");
  if (features.transact && sequence_encoder == SequenceEncoderKind::transformer) {
    encoder_config().validate();
    const bool uses_k = compression == CompressionMode::random_K || compression == CompressionMode::first_K ||
                        compression == CompressionMode::first_K_plus_max;
    if (uses_k && (K < 1 || K > seq_rows())) {
      throw ConfigError("K=" + std::to_string(K) + " must lie in [1, " + std::to_string(seq_rows()) + "]");
    }
  }
}

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t({fan_in, fan_out});
  for (auto& v : t.flat()) v = dist(rng);
  return t;
}

void check_example(const TrainingExample& ex, const ModelConfig& c) {
  if (ex.candidate_embedding.size() != c.d_pin) throw ContractError("candidate embedding width mismatch");
  if (c.features.batch_embedding && ex.batch_user_embedding.size() != c.d_user) {
    throw ContractError("batch user embedding width mismatch");
  }
  if (c.features.other && ex.other_features.size() != c.d_other) throw ContractError("other feature width mismatch");
  if (ex.sequence.max_len != c.max_len) {
    throw ContractError("sequence length " + std::to_string(ex.sequence.max_len) + " != configured " +
                        std::to_string(c.max_len));
  }
}

// Fills cache.seq_input / encoder / traces and returns z [B, z_size].
Tensor sequence_block(std::span<const TrainingExample> batch, const ModelParams& params, const ModelConfig& config,
                      bool training, std::mt19937_64& rng, ForwardCache& cache) {
  const std::size_t B = batch.size();
  const std::size_t zs = config.z_size();
  Tensor z({B, zs});
  if (zs == 0) return z;

  if (config.sequence_encoder == SequenceEncoderKind::avg_pool) {
    for (std::size_t i = 0; i < B; ++i) {
      const auto& entries = batch[i].sequence.entries;
      auto row = z.row(i);
      for (const auto& a : entries) {
        for (std::size_t j = 0; j < config.d_pin; ++j) row[j] += a.pin_embedding[j];
      }
      if (!entries.empty()) {
        for (auto& v : row) v /= static_cast<double>(entries.size());
      }
    }
    return z;
  }

  const std::size_t R = config.seq_rows();
  const std::size_t dm = config.d_model();
  const EncoderConfig ec = config.encoder_config();
  cache.seq_input = Tensor({B * R, dm});
  Mask exclude(B * R, 0);
  for (std::size_t i = 0; i < B; ++i) {
    const auto& ex = batch[i];
    EncodedSequence enc = encode_sequence(ex.sequence, params.action_table, config.d_pin);
    if (training && config.time_window_mask) {
      const double window = sample_time_window(rng, config.time_window_max);
      enc.time_mask = build_time_window_mask(ex.sequence, ex.t_request, window, true);
    }
    const EncodedSequence fused = early_fuse(enc, ex.candidate_embedding, config.fusion);
    std::copy(fused.matrix.data(), fused.matrix.data() + fused.matrix.size(), cache.seq_input.data() + i * R * dm);
    for (std::size_t r = 0; r < R; ++r) exclude[i * R + r] = (fused.pad_mask[r] || fused.time_mask[r]) ? 1 : 0;
  }
  cache.encoder_out = encoder_forward(params.encoder, ec, cache.seq_input, exclude, R, training, rng, &cache.encoder);
  cache.traces.assign(B, {});
  for (std::size_t i = 0; i < B; ++i) {
    const OutputView view{cache.encoder_out.data() + i * R * dm, R, dm};
    const Mask ex_mask(exclude.begin() + static_cast<std::ptrdiff_t>(i * R),
                       exclude.begin() + static_cast<std::ptrdiff_t>((i + 1) * R));
    const auto zi = compress_variant(view, config.compression, config.K, ex_mask, rng, &cache.traces[i]);
    std::copy(zi.begin(), zi.end(), z.row(i).begin());
  }
  return z;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  ModelParams p;
  p.action_table = Tensor({config.n_action_types + 1, config.d_action});
  std::normal_distribution<double> emb(0.0, 0.1);
  for (std::size_t r = 0; r < config.n_action_types; ++r) {
    for (auto& v : p.action_table.row(r)) v = emb(rng);
  }
  if (config.features.transact && config.sequence_encoder == SequenceEncoderKind::transformer) {
    p.encoder = init_encoder(config.encoder_config(), rng);
  }
  const std::size_t D = config.input_size();
  p.w_cross = glorot(D, D, rng);
  p.b_cross = Tensor({D});
  p.w_hidden = glorot(D, config.head_hidden, rng);
  p.b_hidden = Tensor({config.head_hidden});
  p.w_out = glorot(config.head_hidden, config.heads.size(), rng);
  p.b_out = Tensor({config.heads.size()});
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for_each_param(z, [](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_param(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  out.reserve(parameter_count(p));
  for_each_param(p, [&](const std::string&, const Tensor& t) { out.insert(out.end(), t.flat().begin(), t.flat().end()); });
  return out;
}

void unflatten(std::span<const double> flat, ModelParams& p) {
  if (flat.size() != parameter_count(p)) throw ContractError("unflatten: size mismatch");
  std::size_t off = 0;
  for_each_param(p, [&](const std::string&, Tensor& t) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off), flat.begin() + static_cast<std::ptrdiff_t>(off + t.size()),
              t.data());
    off += t.size();
  });
}

Tensor forward_batch(std::span<const TrainingExample> batch, const ModelParams& params, const ModelConfig& config,
                     bool training, std::mt19937_64& rng, ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const std::size_t B = batch.size();
  const std::size_t D = config.input_size();
  const auto& K = kernels::active();
  for (const auto& ex : batch) check_example(ex, config);

  c.batch = B;
  const Tensor z = sequence_block(batch, params, config, training, rng, c);
  const std::size_t zs = z.cols();

  c.x0 = Tensor({B, D});
  for (std::size_t i = 0; i < B; ++i) {
    auto row = c.x0.row(i);
    auto it = row.begin();
    auto zr = z.row(i);
    it = std::copy(zr.begin(), zr.end(), it);
    if (config.features.batch_embedding) {
      it = std::copy(batch[i].batch_user_embedding.begin(), batch[i].batch_user_embedding.end(), it);
    }
    if (config.features.other) it = std::copy(batch[i].other_features.begin(), batch[i].other_features.end(), it);
    std::copy(batch[i].candidate_embedding.begin(), batch[i].candidate_embedding.end(), it);
  }
  (void)zs;

  c.cross_pre = Tensor({B, D});
  for (std::size_t i = 0; i < B; ++i) std::copy(params.b_cross.data(), params.b_cross.data() + D, c.cross_pre.row(i).data());
  K.gemm_nt(B, D, D, c.x0.data(), D, params.w_cross.data(), D, c.cross_pre.data(), D);
  c.x1 = c.cross_pre;
  K.mul(c.x0.data(), c.x1.data(), c.x1.size());
  K.axpy(1.0, c.x0.data(), c.x1.data(), c.x1.size());

  linear_forward(c.x1, params.w_hidden, params.b_hidden, c.hidden_pre);
  c.hidden = c.hidden_pre;
  for (auto& v : c.hidden.flat()) v = v < 0.0 ? 0.0 : v;  // keeps NaN visible
  linear_forward(c.hidden, params.w_out, params.b_out, c.logits);
  c.probs = c.logits;
  for (auto& v : c.probs.flat()) v = sigmoid(v);
  return c.probs;
}

std::vector<double> forward(const TrainingExample& ex, const ModelParams& params, const ModelConfig& config,
                            bool training, std::mt19937_64& rng) {
  const Tensor p = forward_batch({&ex, 1}, params, config, training, rng);
  return {p.data(), p.data() + p.size()};
}

std::vector<double> sequence_vector(const TrainingExample& ex, const ModelParams& params, const ModelConfig& config,
                                    bool training, std::mt19937_64& rng) {
  check_example(ex, config);
  ForwardCache c;
  const Tensor z = sequence_block({&ex, 1}, params, config, training, rng, c);
  return {z.data(), z.data() + z.size()};
}

namespace {

double loss_and_dlogits(std::span<const TrainingExample> batch, const Tensor& probs, const ModelConfig& config,
                        Tensor* dlogits) {
  const std::size_t B = batch.size();
  const std::size_t H = config.heads.size();
  const double inv_b = 1.0 / static_cast<double>(B);
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const auto& ex = batch[i];
    if (ex.labels.size() != H) throw ContractError("label count does not match head count");
    const double wu = user_weight(ex.user_attrs, config.user_weights);
    const auto w = head_weights(ex.labels, config.label_weights, config.neg_fallback);
    total += weighted_loss(probs.row(i), ex.labels, config.label_weights, wu, config.neg_fallback);
    if (dlogits) {
      for (std::size_t h = 0; h < H; ++h) {
        const double f = probs(i, h);
        const bool clamped = f < kProbClamp || f > 1.0 - kProbClamp;
        (*dlogits)(i, h) = clamped ? 0.0 : wu * w[h] * (f - static_cast<double>(ex.labels[h])) * inv_b;
      }
    }
  }
  return total * inv_b;
}

}  // namespace

double batch_loss(std::span<const TrainingExample> batch, const ModelParams& params, const ModelConfig& config,
                  bool training, std::mt19937_64& rng) {
  const Tensor probs = forward_batch(batch, params, config, training, rng);
  return loss_and_dlogits(batch, probs, config, nullptr);
}

double loss_and_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                          const ModelConfig& config, std::mt19937_64& rng, ModelParams& grads) {
  ForwardCache c;
  const Tensor probs = forward_batch(batch, params, config, true, rng, &c);
  const std::size_t B = batch.size();
  const std::size_t D = config.input_size();
  Tensor dlogits({B, config.heads.size()});
  const double loss = loss_and_dlogits(batch, probs, config, &dlogits);
  const auto& K = kernels::active();

  Tensor dhidden({B, config.head_hidden});
  linear_backward(c.hidden, params.w_out, dlogits, &dhidden, grads.w_out, grads.b_out);
  for (std::size_t i = 0; i < dhidden.size(); ++i) {
    if (!(c.hidden_pre[i] > 0.0)) dhidden[i] = 0.0;
  }
  Tensor dx1({B, D});
  linear_backward(c.x1, params.w_hidden, dhidden, &dx1, grads.w_hidden, grads.b_hidden);

  // x1 = x0 * u + x0 with u = x0 W^T + b.
  Tensor du = dx1;
  K.mul(c.x0.data(), du.data(), du.size());
  Tensor dx0 = dx1;
  for (std::size_t i = 0; i < dx0.size(); ++i) dx0[i] += dx1[i] * c.cross_pre[i];
  K.gemm_tn(D, D, B, du.data(), D, c.x0.data(), D, grads.w_cross.data(), D);
  for (std::size_t i = 0; i < B; ++i) K.axpy(1.0, du.data() + i * D, grads.b_cross.data(), D);
  K.gemm_nn(B, D, D, du.data(), D, params.w_cross.data(), D, dx0.data(), D);

  if (config.features.transact && config.sequence_encoder == SequenceEncoderKind::transformer) {
    const std::size_t R = config.seq_rows();
    const std::size_t dm = config.d_model();
    const std::size_t zs = config.z_size();
    Tensor d_o({B * R, dm});
    for (std::size_t i = 0; i < B; ++i) {
      compress_backward(c.traces[i], {dx0.data() + i * D, zs}, dm, d_o.data() + i * R * dm);
    }
    const Tensor dx = encoder_backward(params.encoder, config.encoder_config(), c.encoder, d_o, grads.encoder);
    for (std::size_t i = 0; i < B; ++i) {
      const auto& entries = batch[i].sequence.entries;
      for (std::size_t r = 0; r < entries.size(); ++r) {
        K.axpy(1.0, dx.data() + (i * R + r) * dm, grads.action_table.row(static_cast<std::size_t>(entries[r].action_type)).data(),
               config.d_action);
      }
    }
  }
  return loss;
}

}  // namespace transact
