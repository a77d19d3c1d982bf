// SPDX-License-Identifier: Apache-2.0
#pragma once

// Binary checkpoint container:
//   "TRXCKPT\0"  u32 version  u64 metadata length  metadata (JSON text)
//   u32 array count, then per array:
//     u32 name length  name  u32 rank  u64 dims[rank]  f64 data[prod(dims)]
// Integers and doubles are stored little-endian. Arrays are named
// "param/<name>", "adam_m/<name>" and "adam_v/<name>".

#include <string>

#include "transact/trainer.hpp"

namespace transact {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const TrainState& state);
/// Throws RestoreError on bad magic, version, metadata or array shapes.
TrainState load_checkpoint(const std::string& path);

}  // namespace transact
