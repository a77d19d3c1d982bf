// SPDX-License-Identifier: Apache-2.0
#pragma once

// Train-then-evaluate pipelines shared by the CLI and the acceptance
// checks: single runs, ablation sweeps and the sequence-length sweep.

#include <ostream>
#include <string>
#include <vector>

#include "transact/config.hpp"
#include "transact/metrics.hpp"
#include "transact/synth.hpp"
#include "transact/trainer.hpp"

namespace transact {

struct RunOutcome {
  std::string name;
  RunConfig config;
  TrainResult trained;
  EvalReport report;
  double seconds = 0.0;
};

/// Trains on corpus.train and evaluates on corpus.eval.
RunOutcome train_and_evaluate(const RunConfig& config, const Corpus& corpus, const std::string& name = "base");

/// Base config with the variant's dotted overrides applied and revalidated.
RunConfig apply_variant(const RunConfig& base, const AblationVariant& variant);

/// Variants of a named preset: compression, hybrid (alias drop_feature),
/// pe, fusion, or custom (config.ablate_variants).
std::vector<AblationVariant> preset_variants(const RunConfig& config);

struct AblationRow {
  std::string name;
  std::string overrides;
  std::size_t z_size = 0;
  std::string size_formula;
  EvalReport report;  // deltas filled relative to the base row
  double seconds = 0.0;
  bool is_base = false;
};

/// Base row first; a variant whose effective config equals the base is
/// folded into the base row instead of being trained twice.
std::vector<AblationRow> run_ablation(const RunConfig& config, const Corpus& corpus,
                                      const std::vector<AblationVariant>& variants);

void write_ablation_tsv(std::ostream& os, const std::vector<AblationRow>& rows);
void write_ablation_jsonl(std::ostream& os, const std::vector<AblationRow>& rows);

struct SweepRow {
  std::size_t length = 0;
  std::string fusion;
  std::size_t K = 0;
  EvalReport report;
  double seconds = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// Spearman correlation of length vs HIT@K/repin per fusion mode (NaN
  /// with fewer than two lengths or constant values).
  std::vector<std::pair<std::string, double>> spearman;
};

SweepResult run_seqlen_sweep(const RunConfig& config, const Corpus& corpus);
void write_sweep_tsv(std::ostream& os, const SweepResult& r);
void write_sweep_jsonl(std::ostream& os, const SweepResult& r);

/// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace transact
