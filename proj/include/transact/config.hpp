// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: one JSON document holding the model, training,
// generator, store, evaluation and experiment settings. Parsing starts from
// the defaults and rejects any key the defaults do not contain.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "transact/model.hpp"
#include "transact/store.hpp"
#include "transact/synth.hpp"
#include "transact/trainer.hpp"

namespace transact {

struct AblationVariant {
  std::string name;
  /// Dotted key -> JSON value, applied on top of the base config.
  std::vector<std::pair<std::string, nlohmann::json>> overrides;
};

struct RunConfig {
  std::uint64_t seed = 1;
  GeneratorConfig generator;
  ModelConfig model;
  TrainConfig train;
  StoreConfig store;
  std::size_t eval_K = 3;
  /// Corpus directory read by train/evaluate/ablate/seqlen-sweep.
  std::string corpus_dir = "corpus";
  std::string checkpoint;
  std::string request;
  std::string events;
  /// Named preset ("compression", "hybrid", "pe", "fusion") or "custom".
  std::string ablate_preset = "compression";
  std::vector<AblationVariant> ablate_variants;
  std::vector<std::size_t> sweep_lengths = {10, 50, 100};
  std::vector<std::string> sweep_fusions = {"concat"};

  /// Cross-checks between sections; throws ConfigError.
  void validate() const;
};

/// Desk-scale defaults used by the CLI.
RunConfig default_run_config();

nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const GeneratorConfig& c);

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);

/// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a
/// plain string. Throws ConfigError for unknown keys.
void apply_override(nlohmann::json& doc, const std::string& assignment);
void apply_override(nlohmann::json& doc, const std::string& key, const nlohmann::json& value);

}  // namespace transact
