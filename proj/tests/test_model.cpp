// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "transact/errors.hpp"
#include "transact/model.hpp"

using namespace transact;
using transact::testing::random_batch;
using transact::testing::tiny_model;

namespace {

GradReport end_to_end(const ModelConfig& c, std::uint64_t seed, GradCheckOptions opts = {}) {
  std::mt19937_64 rng(seed);
  const auto params = init_params(c, rng);
  const auto batch = random_batch(c, 4, rng);
  auto grads = zeros_like(params);
  std::mt19937_64 r1(seed + 50);
  loss_and_gradients(batch, params, c, r1, grads);
  auto f = [&](std::span<const double> v) {
    ModelParams q = params;
    unflatten(v, q);
    std::mt19937_64 r(seed + 50);
    return batch_loss(batch, q, c, true, r);
  };
  return grad_check(f, flatten(params), flatten(grads), opts);
}

// Flat index range of one named parameter.
std::pair<std::size_t, std::size_t> param_range(const ModelParams& p, const std::string& name) {
  std::size_t o = 0;
  std::pair<std::size_t, std::size_t> r{0, 0};
  for_each_param(p, [&](const std::string& n, const Tensor& t) {
    if (n == name) r = {o, o + t.size()};
    o += t.size();
  });
  return r;
}

}  // namespace

TEST_CASE("label weights reproduce the worked head-weighting examples") {
  const auto M = LabelWeightMatrix::example_three_head();
  const std::vector<std::uint8_t> hide_only = {0, 0, 1};
  const auto w1 = head_weights(hide_only, M);
  CHECK(w1[0] == 100.0);  // click
  CHECK(w1[1] == 100.0);  // repin
  CHECK(w1[2] == 10.0);
  const std::vector<std::uint8_t> repin_only = {0, 1, 0};
  const auto w2 = head_weights(repin_only, M);
  CHECK(w2[0] == 0.0);
  CHECK(w2[1] == 100.0);
  CHECK(w2[2] == 5.0);
  const std::vector<std::uint8_t> none = {0, 0, 0};
  CHECK(head_weights(none, M, 1.0) == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(head_weights(none, M, 0.0) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK_THROWS_AS(head_weights(std::vector<std::uint8_t>{1, 0}, M), ContractError);
  CHECK_THROWS_AS(LabelWeightMatrix(2, {1, -1, 0, 1}), ConfigError);
}

TEST_CASE("weighted loss: identity M is plain multi-head BCE on the positive heads") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::bernoulli_distribution b(0.4);
  const auto I = LabelWeightMatrix::identity(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p = {u(rng), u(rng), u(rng)};
    std::vector<std::uint8_t> y = {b(rng), b(rng), b(rng)};
    double ref = 0.0;
    for (int h = 0; h < 3; ++h) {
      const double bce = y[h] ? -std::log(p[h]) : -std::log(1.0 - p[h]);
      ref += static_cast<double>(y[h]) * bce;
    }
    CHECK(std::abs(weighted_loss(p, y, I, 1.0, 0.0) - ref) <= 1e-12);
  }
  const std::vector<double> overflow = {1.0 - 1e-17, 0.5, 0.5};
  CHECK_THROWS_AS(weighted_loss(overflow, std::vector<std::uint8_t>{0, 0, 0}, I, 1.0), DomainError);
  const std::vector<double> tiny = {1e-12, 0.5, 0.5};
  CHECK(weighted_loss(tiny, std::vector<std::uint8_t>{1, 0, 0}, I, 1.0, 0.0) ==
        doctest::Approx(-std::log(kProbClamp)));
}

TEST_CASE("user weight multiplies the three attribute tables") {
  UserWeightTables t;
  t.state = {{"core", 2.0}};
  t.gender = {{"f", 1.5}};
  t.location = {{"us", 0.5}};
  CHECK(user_weight({"core", "f", "us"}, t) == 1.5);
  CHECK(user_weight({"new", "m", "intl"}, t) == 1.0);
  const auto M = LabelWeightMatrix::example_three_head();
  const std::vector<double> p = {0.3, 0.6, 0.2};
  const std::vector<std::uint8_t> y = {1, 0, 0};
  CHECK(weighted_loss(p, y, M, UserAttributes{"core", "f", "us"}, t) == doctest::Approx(1.5 * weighted_loss(p, y, M, 1.0)));
}

TEST_CASE("dcn cross layer") {
  const std::vector<double> x0 = {1.0, 2.0}, xl = {0.5, -1.0};
  const Tensor w({2, 2}, {1.0, 2.0, 3.0, 4.0});
  const std::vector<double> b = {0.1, 0.2};
  // W xl = [0.5 - 2, 1.5 - 4] = [-1.5, -2.5]
  const auto y = dcn_cross(x0, xl, w, b);
  CHECK(y[0] == doctest::Approx(1.0 * (-1.5 + 0.1) + 0.5));
  CHECK(y[1] == doctest::Approx(2.0 * (-2.5 + 0.2) - 1.0));
  CHECK_THROWS_AS(dcn_cross(x0, xl, Tensor({2, 3}), b), ContractError);
}

TEST_CASE("model sizes and parameter layout") {
  ModelConfig c;
  c.d_action = 32;
  c.d_pin = 64;
  c.K = 10;
  c.compression = CompressionMode::first_K_plus_max;
  CHECK(c.d_model() == 160);  // concat adds the candidate to every row
  CHECK(c.z_size() == 11 * 160);
  c.fusion = FusionMode::append;
  CHECK(c.d_model() == 96);
  CHECK(c.z_size() == 1056);
  CHECK(c.seq_rows() == 101);
  c.features.transact = false;
  CHECK(c.z_size() == 0);
  c.features.transact = true;
  c.sequence_encoder = SequenceEncoderKind::avg_pool;
  CHECK(c.z_size() == 64);

  const auto t = tiny_model();
  std::mt19937_64 rng(1);
  const auto p = init_params(t, rng);
  CHECK(p.action_table.rows() == t.n_action_types + 1);
  for (double v : p.action_table.row(t.n_action_types)) CHECK(v == 0.0);
  CHECK(p.w_cross.rows() == t.input_size());
  CHECK(flatten(p).size() == parameter_count(p));
  auto q = zeros_like(p);
  unflatten(flatten(p), q);
  CHECK(flatten(q) == flatten(p));
}

TEST_CASE("end-to-end loss gradients across configurations") {
  auto base = tiny_model();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    const auto rep = end_to_end(base, seed);
    CHECK_MESSAGE(rep.passed, "max rel ", rep.max_rel_err, " idx ", rep.worst_index);
  }
  SUBCASE("append, two heads, linear projection, dropout, time mask, random K") {
    auto c = base;
    c.fusion = FusionMode::append;
    c.d_action = 4;
    c.encoder.n_heads = 2;
    c.encoder.positional_encoding = PositionalEncoding::linear_projection;
    c.encoder.dropout = 0.2;
    c.time_window_mask = true;
    c.time_window_max = 900;
    c.compression = CompressionMode::random_K;
    CHECK(end_to_end(c, 4).passed);
  }
  SUBCASE("sinusoidal, all columns plus max") {
    auto c = base;
    c.encoder.positional_encoding = PositionalEncoding::sinusoidal;
    c.compression = CompressionMode::all_plus_max;
    CHECK(end_to_end(c, 5).passed);
  }
  SUBCASE("average pooling baseline") {
    auto c = base;
    c.sequence_encoder = SequenceEncoderKind::avg_pool;
    CHECK(end_to_end(c, 6).passed);
  }
  SUBCASE("feature switches and user weights") {
    auto c = base;
    c.features.batch_embedding = false;
    c.user_weights.state = {{"core", 3.0}};
    CHECK(end_to_end(c, 7).passed);
    c.features = {false, true, false};
    CHECK(end_to_end(c, 8).passed);
  }
}

TEST_CASE("cross layer and head gradients in isolation") {
  auto c = tiny_model();
  c.features.transact = false;
  std::mt19937_64 rng(3);
  const auto p = init_params(c, rng);
  for (const char* name : {"cross.w", "cross.b", "head.w_hidden", "head.b_hidden", "head.w_out", "head.b_out"}) {
    CAPTURE(name);
    const auto [lo, hi] = param_range(p, name);
    REQUIRE(hi > lo);
    GradCheckOptions o;
    for (std::size_t i = lo; i < hi; ++i) o.indices.push_back(i);
    CHECK(end_to_end(c, 3, o).passed);
  }
}

TEST_CASE("batched forward equals per-example forward; inference ignores the rng") {
  auto c = tiny_model();
  c.time_window_mask = true;
  c.encoder.dropout = 0.3;
  std::mt19937_64 rng(2);
  const auto p = init_params(c, rng);
  const auto batch = random_batch(c, 6, rng);
  std::mt19937_64 a(1), b(2);
  const Tensor pa = forward_batch(batch, p, c, false, a);
  const Tensor pb = forward_batch(batch, p, c, false, b);
  CHECK(pa == pb);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::mt19937_64 r(3);
    const auto single = forward(batch[i], p, c, false, r);
    for (std::size_t h = 0; h < single.size(); ++h) CHECK(std::abs(single[h] - pa(i, h)) <= 1e-12);
  }
  CHECK_THROWS_AS([&] {
    auto bad = batch;
    bad[0].candidate_embedding.pop_back();
    std::mt19937_64 r(0);
    forward_batch(bad, p, c, false, r);
  }(), ContractError);
}

TEST_CASE("PAD embedding row never moves") {
  auto c = tiny_model();
  std::mt19937_64 rng(4);
  const auto p = init_params(c, rng);
  const auto batch = random_batch(c, 5, rng);
  auto g = zeros_like(p);
  std::mt19937_64 r(0);
  loss_and_gradients(batch, p, c, r, g);
  for (double v : g.action_table.row(c.n_action_types)) CHECK(v == 0.0);
}
