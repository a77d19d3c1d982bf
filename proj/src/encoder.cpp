// SPDX-License-Identifier: Apache-2.0
#include "transact/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "transact/errors.hpp"
#include "transact/kernels.hpp"

namespace transact {
namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t({fan_in, fan_out});
  for (auto& v : t.flat()) v = dist(rng);
  return t;
}

Tensor ones(std::size_t n) {
  Tensor t({n});
  t.fill(1.0);
  return t;
}

void add_rows(const Tensor& a, const Tensor& b, Tensor& out) {
  out = a;
  kernels::active().axpy(1.0, b.data(), out.data(), out.size());
}

void layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, Tensor& out,
                     std::vector<LayerNormStats>& stats) {
  out = Tensor({x.rows(), x.cols()});
  stats.resize(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) stats[r] = layer_norm(x.row(r), gamma.flat(), beta.flat(), eps, out.row(r));
}

void layer_norm_rows_backward(const Tensor& x, const std::vector<LayerNormStats>& stats, const Tensor& gamma,
                              const Tensor& dy, Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  dx = Tensor({x.rows(), x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    layer_norm_backward(x.row(r), stats[r], gamma.flat(), dy.row(r), dx.row(r), dgamma.flat(), dbeta.flat());
  }
}

}  // namespace

PositionalEncoding parse_positional_encoding(std::string_view s) {
  if (s == "none") return PositionalEncoding::none;
  if (s == "sinusoidal") return PositionalEncoding::sinusoidal;
  if (s == "learned") return PositionalEncoding::learned;
  if (s == "linear_projection") return PositionalEncoding::linear_projection;
  throw ConfigError("unknown positional encoding '" + std::string(s) + "'");
}

std::string_view to_string(PositionalEncoding p) {
  switch (p) {
    case PositionalEncoding::none: return "none";
    case PositionalEncoding::sinusoidal: return "sinusoidal";
    case PositionalEncoding::learned: return "learned";
    case PositionalEncoding::linear_projection: return "linear_projection";
  }
  return "none";
}

void EncoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("encoder n_layers must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("encoder d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (d_hidden < 1) throw ConfigError("encoder d_hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder dropout must be in [0, 1)");
  if (rows < 1) throw ConfigError("encoder rows must be >= 1");
  if (!(ln_eps > 0.0)) throw ConfigError("encoder ln_eps must be positive");
}

Tensor sinusoidal_table(std::size_t rows, std::size_t d) {
  Tensor t({rows, d});
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      t(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

EncoderParams init_encoder(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.d_model, dh = config.d_hidden;
  EncoderParams p;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayerParams L;
    L.wq = glorot(d, d, rng);
    L.wk = glorot(d, d, rng);
    L.wv = glorot(d, d, rng);
    L.wo = glorot(d, d, rng);
    L.w1 = glorot(d, dh, rng);
    L.w2 = glorot(dh, d, rng);
    L.bq = Tensor({d});
    L.bk = Tensor({d});
    L.bv = Tensor({d});
    L.bo = Tensor({d});
    L.b1 = Tensor({dh});
    L.b2 = Tensor({d});
    L.ln1_gamma = ones(d);
    L.ln1_beta = Tensor({d});
    L.ln2_gamma = ones(d);
    L.ln2_beta = Tensor({d});
    p.layers.push_back(std::move(L));
  }
  if (config.positional_encoding == PositionalEncoding::learned) {
    std::normal_distribution<double> dist(0.0, 0.02);
    p.pos_table = Tensor({config.rows, d});
    for (auto& v : p.pos_table.flat()) v = dist(rng);
  } else if (config.positional_encoding == PositionalEncoding::linear_projection) {
    std::normal_distribution<double> dist(0.0, 0.02);
    p.pos_proj = Tensor({d});
    for (auto& v : p.pos_proj.flat()) v = dist(rng);
  }
  return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z = p;
  for_each_tensor(z, "", [](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

Tensor encoder_forward(const EncoderParams& params, const EncoderConfig& config, const Tensor& x,
                       const Mask& exclude, std::size_t rows, bool training, std::mt19937_64& rng,
                       EncoderCache* cache) {
  const std::size_t d = config.d_model;
  if (x.cols() != d || rows == 0 || x.rows() % rows != 0) {
    throw ContractError("encoder_forward: input [" + std::to_string(x.rows()) + "," + std::to_string(x.cols()) +
                        "] incompatible with rows=" + std::to_string(rows) + " d_model=" + std::to_string(d));
  }
  if (exclude.size() != x.rows()) throw ContractError("encoder_forward: mask size does not match input rows");
  if (params.layers.size() != config.n_layers) throw ContractError("encoder_forward: layer count mismatch");
  const std::size_t B = x.rows() / rows;
  const std::size_t H = config.n_heads;
  const std::size_t dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = training && config.dropout > 0.0;
  const double keep = 1.0 - config.dropout;
  const double inv_keep = 1.0 / keep;
  const auto& K = kernels::active();

  Tensor cur = x;
  switch (config.positional_encoding) {
    case PositionalEncoding::none: break;
    case PositionalEncoding::sinusoidal: {
      const Tensor pe = sinusoidal_table(rows, d);
      for (std::size_t b = 0; b < B; ++b) K.axpy(1.0, pe.data(), cur.data() + b * rows * d, rows * d);
      break;
    }
    case PositionalEncoding::learned: {
      if (params.pos_table.rows() != rows) throw ContractError("learned positional table has wrong row count");
      for (std::size_t b = 0; b < B; ++b) K.axpy(1.0, params.pos_table.data(), cur.data() + b * rows * d, rows * d);
      break;
    }
    case PositionalEncoding::linear_projection: {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double pos = static_cast<double>(r) / static_cast<double>(rows);
          K.axpy(pos, params.pos_proj.data(), cur.data() + (b * rows + r) * d, d);
        }
      }
      break;
    }
  }

  if (cache) {
    cache->layers.assign(config.n_layers, {});
    cache->x_raw = x;
    cache->exclude = exclude;
    cache->batch = B;
    cache->rows = rows;
  }
  std::bernoulli_distribution keep_dist(keep);
  std::vector<double> dropped(rows * rows);

  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto& L = params.layers[l];
    EncoderCache::Layer local;
    EncoderCache::Layer& c = cache ? cache->layers[l] : local;

    c.x_in = cur;
    linear_forward(cur, L.wq, L.bq, c.q);
    linear_forward(cur, L.wk, L.bk, c.k);
    linear_forward(cur, L.wv, L.bv, c.v);

    c.probs.assign(B * H * rows * rows, 0.0);
    if (drop) c.attn_drop.assign(B * H * rows * rows, 0.0);
    c.ctx = Tensor({B * rows, d});
    for (std::size_t b = 0; b < B; ++b) {
      const std::span<const std::uint8_t> key_mask(exclude.data() + b * rows, rows);
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = b * rows * d + h * dh;
        double* S = c.probs.data() + (b * H + h) * rows * rows;
        K.gemm_nt(rows, rows, dh, c.q.data() + off, d, c.k.data() + off, d, S, rows);
        for (std::size_t i = 0; i < rows; ++i) {
          std::span<double> srow(S + i * rows, rows);
          for (double& s : srow) s *= scale;
          softmax_masked_inplace(srow, key_mask);
        }
        const double* P = S;
        if (drop) {
          double* m = c.attn_drop.data() + (b * H + h) * rows * rows;
          for (std::size_t i = 0; i < rows * rows; ++i) {
            m[i] = keep_dist(rng) ? inv_keep : 0.0;
            dropped[i] = S[i] * m[i];
          }
          P = dropped.data();
        }
        K.gemm_nn(rows, dh, rows, P, rows, c.v.data() + off, d, c.ctx.data() + off, d);
      }
    }

    Tensor attn;
    linear_forward(c.ctx, L.wo, L.bo, attn);
    add_rows(cur, attn, c.res1);
    layer_norm_rows(c.res1, L.ln1_gamma, L.ln1_beta, config.ln_eps, c.h1, c.ln1);

    linear_forward(c.h1, L.w1, L.b1, c.f_pre);
    c.f_act = c.f_pre;
    for (auto& v : c.f_act.flat()) v = v < 0.0 ? 0.0 : v;  // keeps NaN visible
    Tensor f_out;
    linear_forward(c.f_act, L.w2, L.b2, f_out);
    if (drop) {
      c.ffn_drop.resize(f_out.size());
      for (std::size_t i = 0; i < f_out.size(); ++i) c.ffn_drop[i] = keep_dist(rng) ? inv_keep : 0.0;
      K.mul(c.ffn_drop.data(), f_out.data(), f_out.size());
    }
    add_rows(c.h1, f_out, c.res2);
    layer_norm_rows(c.res2, L.ln2_gamma, L.ln2_beta, config.ln_eps, cur, c.ln2);
  }

  for (std::size_t r = 0; r < cur.rows(); ++r) {
    if (exclude[r]) std::fill(cur.row(r).begin(), cur.row(r).end(), 0.0);
  }
  return cur;
}

Tensor encoder_backward(const EncoderParams& params, const EncoderConfig& config, const EncoderCache& cache,
                        const Tensor& d_out, EncoderParams& grads) {
  const std::size_t d = config.d_model;
  const std::size_t B = cache.batch, rows = cache.rows;
  const std::size_t H = config.n_heads;
  const std::size_t dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& K = kernels::active();
  if (d_out.rows() != B * rows || d_out.cols() != d) throw ContractError("encoder_backward: gradient shape mismatch");

  Tensor dcur = d_out;
  for (std::size_t r = 0; r < dcur.rows(); ++r) {
    if (cache.exclude[r]) std::fill(dcur.row(r).begin(), dcur.row(r).end(), 0.0);
  }

  std::vector<double> p_drop(rows * rows), dp(rows * rows), ds(rows * rows);
  for (std::size_t li = config.n_layers; li-- > 0;) {
    const auto& L = params.layers[li];
    auto& G = grads.layers[li];
    const auto& c = cache.layers[li];
    const bool drop = !c.attn_drop.empty();

    Tensor dres2;
    layer_norm_rows_backward(c.res2, c.ln2, L.ln2_gamma, dcur, dres2, G.ln2_gamma, G.ln2_beta);

    Tensor dh1 = dres2;
    Tensor df_out = dres2;
    if (!c.ffn_drop.empty()) K.mul(c.ffn_drop.data(), df_out.data(), df_out.size());
    Tensor df_act({c.f_act.rows(), c.f_act.cols()});
    linear_backward(c.f_act, L.w2, df_out, &df_act, G.w2, G.b2);
    for (std::size_t i = 0; i < df_act.size(); ++i) {
      if (!(c.f_pre[i] > 0.0)) df_act[i] = 0.0;
    }
    linear_backward(c.h1, L.w1, df_act, &dh1, G.w1, G.b1);

    Tensor dres1;
    layer_norm_rows_backward(c.res1, c.ln1, L.ln1_gamma, dh1, dres1, G.ln1_gamma, G.ln1_beta);

    Tensor dx = dres1;
    Tensor dctx({B * rows, d});
    linear_backward(c.ctx, L.wo, dres1, &dctx, G.wo, G.bo);

    Tensor dq({B * rows, d}), dk({B * rows, d}), dv({B * rows, d});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = b * rows * d + h * dh;
        const std::size_t poff = (b * H + h) * rows * rows;
        const double* P = c.probs.data() + poff;
        const double* Pd = P;
        if (drop) {
          const double* m = c.attn_drop.data() + poff;
          for (std::size_t i = 0; i < rows * rows; ++i) p_drop[i] = P[i] * m[i];
          Pd = p_drop.data();
        }
        std::fill(dp.begin(), dp.end(), 0.0);
        K.gemm_nt(rows, rows, dh, dctx.data() + off, d, c.v.data() + off, d, dp.data(), rows);
        K.gemm_tn(rows, dh, rows, Pd, rows, dctx.data() + off, d, dv.data() + off, d);
        if (drop) K.mul(c.attn_drop.data() + poff, dp.data(), rows * rows);
        for (std::size_t i = 0; i < rows; ++i) {
          softmax_backward({P + i * rows, rows}, {dp.data() + i * rows, rows}, {ds.data() + i * rows, rows});
        }
        for (double& v : ds) v *= scale;
        K.gemm_nn(rows, dh, rows, ds.data(), rows, c.k.data() + off, d, dq.data() + off, d);
        K.gemm_tn(rows, dh, rows, ds.data(), rows, c.q.data() + off, d, dk.data() + off, d);
      }
    }
    linear_backward(c.x_in, L.wq, dq, &dx, G.wq, G.bq);
    linear_backward(c.x_in, L.wk, dk, &dx, G.wk, G.bk);
    linear_backward(c.x_in, L.wv, dv, &dx, G.wv, G.bv);
    dcur = std::move(dx);
  }

  if (config.positional_encoding == PositionalEncoding::learned) {
    for (std::size_t b = 0; b < B; ++b) K.axpy(1.0, dcur.data() + b * rows * d, grads.pos_table.data(), rows * d);
  } else if (config.positional_encoding == PositionalEncoding::linear_projection) {
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double pos = static_cast<double>(r) / static_cast<double>(rows);
        K.axpy(pos, dcur.data() + (b * rows + r) * d, grads.pos_proj.data(), d);
      }
    }
  }
  return dcur;
}

Tensor transformer_encode(const EncodedSequence& u, const EncoderParams& params, const EncoderConfig& config,
                          bool training, std::mt19937_64& rng) {
  if (u.pad_mask.size() != u.rows() || u.time_mask.size() != u.rows()) {
    throw ContractError("transformer_encode: masks must have one entry per row");
  }
  return encoder_forward(params, config, u.matrix, combine_masks(u.pad_mask, u.time_mask), u.rows(), training, rng,
                         nullptr);
}

}  // namespace transact
