// SPDX-License-Identifier: Apache-2.0
#pragma once

// Corpus directory layout. Every file is line-delimited JSON whose first
// line is a {"schema": ..., "version": ...} header:
//   pins.jsonl     pin_id, cluster_id, embedding
//   users.jsonl    user_id, attributes, batch_embedding, other_features, non_core
//   actions.jsonl  one action event per line (also the ingest replay format)
//   train.jsonl    user_id, pin_id, chunk_id, t_request, labels, base_rate
//   eval.jsonl     same as train.jsonl

#include <string>

#include "transact/store.hpp"
#include "transact/synth.hpp"

namespace transact {

inline constexpr int kCorpusFilesVersion = 1;

/// Creates `dir` if needed. Throws IoError.
void write_corpus(const std::string& dir, const Corpus& corpus);
/// Throws IoError for missing files and ContractError for bad records.
Corpus read_corpus(const std::string& dir);

/// The corpus histories as replayable events.
std::vector<ActionEvent> corpus_events(const Corpus& corpus);

}  // namespace transact
