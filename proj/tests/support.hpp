// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixtures shared by the unit tests and the acceptance checks.

#include <cmath>
#include <random>
#include <vector>

#include "transact/encoder.hpp"
#include "transact/model.hpp"
#include "transact/ops.hpp"

namespace transact::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.flat()) v = n(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <class P>
std::vector<double> flatten_tensors(P& p) {
  std::vector<double> out;
  for_each_tensor(p, "", [&](const std::string&, auto& t) { out.insert(out.end(), t.flat().begin(), t.flat().end()); });
  return out;
}

template <class P>
void unflatten_tensors(std::span<const double> flat, P& p) {
  std::size_t o = 0;
  for_each_tensor(p, "", [&](const std::string&, auto& t) {
    for (auto& v : t.flat()) v = flat[o++];
  });
}

/// Small model config exercising every block; dims kept tiny so finite
/// differences over all parameters stay cheap.
inline ModelConfig tiny_model() {
  ModelConfig c;
  c.max_len = 6;
  c.d_action = 3;
  c.d_pin = 4;
  c.d_user = 3;
  c.d_other = 2;
  c.K = 2;
  c.head_hidden = 5;
  c.encoder.d_hidden = 7;
  c.encoder.n_heads = 1;
  c.encoder.dropout = 0.0;
  c.encoder.positional_encoding = PositionalEncoding::learned;
  c.time_window_mask = false;
  return c;
}

/// Histories of 2..max_len+2 actions at 10 s spacing ending before t = 1000,
/// with some timestamp ties.
inline std::vector<TrainingExample> random_batch(const ModelConfig& c, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_int_distribution<int> type(0, static_cast<int>(c.n_action_types) - 1);
  std::uniform_int_distribution<std::size_t> len(1, c.max_len + 2);
  std::vector<TrainingExample> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = b[i];
    std::vector<UserAction> h;
    const std::size_t L = len(rng);
    for (std::size_t k = 0; k < L; ++k) {
      UserAction a;
      a.timestamp = 900 - static_cast<std::int64_t>((L - k) / 2) * 20;
      a.action_type = type(rng);
      a.pin_id = static_cast<std::int64_t>(k);
      for (std::size_t j = 0; j < c.d_pin; ++j) a.pin_embedding.push_back(N(rng));
      h.push_back(std::move(a));
    }
    e.user_id = static_cast<std::int64_t>(i);
    e.pin_id = static_cast<std::int64_t>(100 + i);
    e.t_request = 1000;
    e.sequence = build_sequence(h, e.t_request, c.max_len);
    for (std::size_t j = 0; j < c.d_pin; ++j) e.candidate_embedding.push_back(N(rng));
    for (std::size_t j = 0; j < c.d_user; ++j) e.batch_user_embedding.push_back(N(rng));
    for (std::size_t j = 0; j < c.d_other; ++j) e.other_features.push_back(N(rng));
    e.labels.assign(c.heads.size(), 0);
    const std::size_t pick = i % (c.heads.size() + 1);
    if (pick < c.heads.size()) e.labels[pick] = 1;
    e.user_attrs = {"core", "f", "us"};
  }
  return b;
}

/// Loss = <R, encoder_forward(x)>, so d_out = R.
struct EncoderProbe {
  EncoderConfig config;
  EncoderParams params;
  Tensor x;
  Mask exclude;
  std::size_t rows;
  Tensor r;

  double loss(const EncoderParams& p, const Tensor& input) const {
    std::mt19937_64 rng(0);
    const Tensor y = encoder_forward(p, config, input, exclude, rows, false, rng, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  }
};

}  // namespace transact::testing
