// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "transact/checkpoint.hpp"
#include "transact/config.hpp"
#include "transact/errors.hpp"
#include "transact/trainer.hpp"

using namespace transact;
using transact::testing::random_batch;
using transact::testing::tiny_model;

namespace {

TrainConfig quick_train(std::size_t steps = 12) {
  TrainConfig t;
  t.batch_size = 8;
  t.total_steps = steps;
  t.warmup_steps = 3;
  t.seed = 3;
  return t;
}

}  // namespace

TEST_CASE("schedule endpoints and continuity") {
  TrainConfig c;
  c.warmup_steps = 200;
  c.total_steps = 2000;
  c.min_lr = 1e-4;
  CHECK(lr_schedule(0, c) == 0.0);
  CHECK(lr_schedule(200, c) == 0.0048);
  CHECK(lr_schedule(2000, c) == 1e-4);
  CHECK(std::abs(lr_schedule(199, c) - 0.0048 * 199.0 / 200.0) < 1e-15);
  // Both sides of the warmup boundary approach the peak.
  const double left = 0.0048 * (200.0 - 1e-9) / 200.0;
  CHECK(std::abs(left - lr_schedule(200, c)) < 1e-12);
  CHECK(lr_schedule(1100, c) == doctest::Approx(1e-4 + 0.5 * (0.0048 - 1e-4)).epsilon(0.02));
  for (std::size_t s = 201; s < 2000; s += 97) CHECK(lr_schedule(s, c) <= lr_schedule(s - 1, c));
  TrainConfig bad;
  bad.warmup_steps = 5000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("adam step matches hand arithmetic") {
  auto c = tiny_model();
  std::mt19937_64 rng(1);
  auto p = init_params(c, rng);
  auto g = zeros_like(p);
  g.b_out[0] = 0.5;
  AdamState st{zeros_like(p), zeros_like(p)};
  TrainConfig tc;
  const double before = p.b_out[0], other = p.b_out[1];
  adam_update(p, g, st, 0.01, 1, tc);
  // First step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
  CHECK(p.b_out[0] == doctest::Approx(before - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p.b_out[1] == other);
  adam_update(p, g, st, 0.01, 2, tc);
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double step2 = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(p.b_out[0] == doctest::Approx(before - 0.01 * 0.5 / (0.5 + 1e-8) - step2).epsilon(1e-12));
}

TEST_CASE("batch indices walk epoch permutations") {
  const std::size_t n = 50, B = 8;
  std::multiset<std::size_t> seen;
  // ceil(50 / 8) steps do not align with the epoch; cover two full epochs.
  for (std::size_t s = 0; s < (2 * n) / B; ++s)
    for (auto i : batch_indices(s, B, n, 7)) seen.insert(i);
  for (std::size_t i = 0; i < n; ++i) CHECK(seen.count(i) >= 1);
  std::set<std::size_t> first_epoch;
  for (std::size_t s = 0; s < 6; ++s)
    for (auto i : batch_indices(s, B, n, 7)) first_epoch.insert(i);
  CHECK(first_epoch.size() == 48);
  CHECK(batch_indices(3, B, n, 7) == batch_indices(3, B, n, 7));
  CHECK_FALSE(batch_indices(3, B, n, 7) == batch_indices(3, B, n, 8));
}

TEST_CASE("training is deterministic and reduces the loss") {
  auto c = tiny_model();
  std::mt19937_64 rng(5);
  const auto data = random_batch(c, 64, rng);
  VectorSource src(data);
  auto tc = quick_train(60);
  tc.peak_lr = 0.02;
  const auto a = train(c, tc, src);
  const auto b = train(c, tc, src);
  CHECK(flatten(a.state.params) == flatten(b.state.params));
  REQUIRE(a.trace.size() == 60);
  CHECK(a.trace.back().smoothed < a.trace[tc.smoothing - 1].smoothed);
  CHECK(a.trace[0].lr == 0.0);
  std::ostringstream os;
  write_trace_tsv(os, a.trace, c.heads.names);
  CHECK(os.str().rfind("step\t", 0) == 0);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  auto c = tiny_model();
  c.encoder.dropout = 0.2;
  c.time_window_mask = true;
  c.time_window_max = 300;
  std::mt19937_64 rng(6);
  const auto data = random_batch(c, 40, rng);
  VectorSource src(data);
  const auto tc = quick_train(20);
  const auto full = train(c, tc, src);

  auto s = init_state(c, tc);
  train_steps(s, src, nullptr, 9);
  const auto path = (std::filesystem::temp_directory_path() / "transact_resume_test.ckpt").string();
  save_checkpoint(path, s);
  auto r = load_checkpoint(path);
  CHECK(r.step == 9);
  CHECK(flatten(r.params) == flatten(s.params));
  train_steps(r, src);
  CHECK(r.step == 20);
  CHECK(flatten(r.params) == flatten(full.state.params));
  CHECK(flatten(r.adam.v) == flatten(full.state.adam.v));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects damaged files") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "transact_bad.ckpt").string();
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), RestoreError);
  auto s = init_state(tiny_model(), quick_train());
  save_checkpoint(path, s);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 16);
  CHECK_THROWS_AS(load_checkpoint(path), RestoreError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), RestoreError);
  std::filesystem::remove(path);
}

TEST_CASE("non-finite loss stops training with the step") {
  auto c = tiny_model();
  std::mt19937_64 rng(7);
  auto data = random_batch(c, 16, rng);
  for (auto& e : data) e.other_features[0] = std::nan("");
  VectorSource src(data);
  try {
    train(c, quick_train(), src);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("config: defaults round trip, unknown keys and bad types are rejected") {
  const auto d = default_run_config();
  CHECK_NOTHROW(d.validate());
  auto j = to_json(d);
  CHECK(to_json(run_config_from_json(j)) == j);

  auto unknown = j;
  unknown["model"]["dropout_rate"] = 0.1;
  CHECK_THROWS_AS(run_config_from_json(unknown), ConfigError);
  auto typo = j;
  typo["trian"] = nlohmann::json::object();
  CHECK_THROWS_AS(run_config_from_json(typo), ConfigError);
  auto kind = j;
  kind["train"]["batch_size"] = 2.5;
  CHECK_THROWS_AS(run_config_from_json(kind), ConfigError);
  auto str = j;
  str["model"]["fusion"] = "sum";
  CHECK_THROWS_AS(run_config_from_json(str), ConfigError);

  apply_override(j, "model.compression=max_pool");
  apply_override(j, "train.total_steps=70");
  apply_override(j, "seed=11");
  const auto c = run_config_from_json(j);
  CHECK(c.model.compression == CompressionMode::max_pool);
  CHECK(c.train.total_steps == 70);
  CHECK(c.generator.seed == 11);
  CHECK(c.train.seed == 11);
  CHECK_THROWS_AS(apply_override(j, "model.no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "missing_equals"), ConfigError);

  auto mismatch = j;
  mismatch["model"]["d_pin"] = 16;
  CHECK_THROWS_AS(run_config_from_json(mismatch), ConfigError);
}

TEST_CASE("config file may carry comments") {
  const auto path = (std::filesystem::temp_directory_path() / "transact_cfg_test.json").string();
  {
    std::ofstream f(path);
    f << "{\n  // shorter run\n  \"train\": {\"total_steps\": 5, \"warmup_steps\": 1}\n}\n";
  }
  const auto c = load_run_config(path);
  CHECK(c.train.total_steps == 5);
  CHECK(c.model.max_len == default_run_config().model.max_len);
  std::filesystem::remove(path);
  CHECK_THROWS(load_run_config(path));
}
