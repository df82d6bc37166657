// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoints, little-endian:
//
//   "TSCK" magic, u16 format version,
//   u32 config length + config echo (ModelConfig::to_text),
//   u32 tensor count + u64 total scalar count,
//   per tensor: u16 name length + name, u8 rank, u32 per dim, f64 values.
#pragma once

#include <cstdint>
#include <filesystem>

#include "tsert/model.hpp"

namespace tsert {

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const TsertModel& model, const std::filesystem::path& path);

/// Rebuilds the model from the embedded config and loads every tensor.
/// Name, shape, count and version mismatches raise FormatError subclasses.
TsertModel load_checkpoint(const std::filesystem::path& path);

/// Exact byte size save_checkpoint() produces for this model.
std::uint64_t checkpoint_size(const TsertModel& model);

}  // namespace tsert
